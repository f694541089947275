import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holescatter.capacitance import format_mesh, icosphere
from holescatter.cluster import (
    Cluster,
    Hole,
    MeshShape,
    SourceConfig,
    check_expansion_condition,
    check_solvability_condition,
    cluster_to_config,
    load_cluster,
    parse_cluster_text,
    periodic_layout,
    regime_exponents,
    separations,
)
from holescatter.signal import SmoothBump

from conftest import FOUR_PI, sphere_hole

BOX_53 = (-0.018, 0.018, -0.018, 0.018, -0.018, 0.018)


@pytest.fixture
def pair():
    return Cluster((sphere_hole((0, 0, 0), 0.01), sphere_hole((0.5, 0, 0), 0.01)))


def lattice(n, pitch, radius):
    offs = pitch * (np.arange(n) - (n - 1) / 2)
    return Cluster(tuple(sphere_hole((x, y, z), radius) for x in offs for y in offs for z in offs))


def test_separations_of_a_pair(pair):
    a, d, dij = separations(pair)
    assert a == pytest.approx(0.02)
    assert d == pytest.approx(0.48)
    assert np.isinf(dij[0, 0]) and dij[0, 1] == pytest.approx(0.48)


def test_single_hole_has_infinite_gap():
    a, d, _ = separations(Cluster((sphere_hole((0, 0, 0), 0.3),)))
    assert a == pytest.approx(0.6) and math.isinf(d)


def test_twenty_seven_hole_lattice_gap():
    _, d, _ = separations(lattice(3, 0.05, 1e-5))
    assert d == pytest.approx(0.05 - 2e-5, rel=1e-12)


def test_expansion_margin(pair):
    assert check_expansion_condition(pair) == pytest.approx(0.02 / 0.48**2, rel=1e-12)
    assert check_expansion_condition(pair) == pytest.approx(0.0868, abs=5e-5)


def test_expansion_margin_of_lattice_is_admissible():
    assert check_expansion_condition(lattice(3, 0.05, 1e-5)) < 1


def test_solvability_margin(pair):
    assert check_solvability_condition(pair) == pytest.approx(0.02, rel=1e-12)


@pytest.mark.parametrize("check", [check_expansion_condition, check_solvability_condition])
def test_single_hole_margins_vanish(check):
    assert check(Cluster((sphere_hole((0, 0, 0), 0.01),))) == 0.0


def test_regime_exponents_for_a_dense_lattice():
    cl = lattice(4, 0.012, 0.0055)
    reg = regime_exponents(cl)
    a, d = 0.011, 0.001
    assert reg["s"] == pytest.approx(math.log(64) / math.log(1 / a), rel=1e-9)
    assert reg["beta"] == pytest.approx(math.log(1 / d) / math.log(1 / a), rel=1e-6)
    s, b = reg["s"], reg["beta"]
    assert reg["error_exponents"] == pytest.approx((2 - s, 3 - 2 * s, 3 - 2 * b - s))


def test_regime_exponents_doubling_the_count():
    one = lattice(2, 0.1, 0.005)
    two = Cluster(one.holes + one.translated((1.0, 0, 0)).holes)
    delta = regime_exponents(two)["s"] - regime_exponents(one)["s"]
    assert delta == pytest.approx(math.log(2) / math.log(1 / 0.01), rel=1e-12)


def test_regime_exponents_reject_single_hole():
    with pytest.raises(ValueError):
        regime_exponents(Cluster((sphere_hole((0, 0, 0), 0.01),)))


def test_overlapping_holes_are_rejected():
    with pytest.raises(ValueError, match="overlap"):
        Cluster((sphere_hole((0, 0, 0), 0.1), sphere_hole((0.15, 0, 0), 0.1)))


def test_source_inside_a_hole_is_rejected(pair):
    with pytest.raises(ValueError, match="inside"):
        SourceConfig((0.505, 0, 0), SmoothBump()).check_outside(pair)


def test_missing_capacitance_is_reported():
    with pytest.raises(ValueError):
        Cluster((Hole.sphere((0, 0, 0), 0.01),)).capacitances


def test_periodic_layout_uniform_radii_equal_cell_volume():
    cl = periodic_layout((0, 1, 0, 1, 0, 1), a=0.0055, cbar=FOUR_PI)
    radii = np.array([h.shape.radius for h in cl.holes])
    assert len(cl) == 125
    assert np.allclose(radii, 0.0055, rtol=1e-12)
    assert np.allclose(cl.capacitances, FOUR_PI * 0.0055, rtol=1e-12)


def test_periodic_layout_of_the_small_box_has_64_cells():
    a = 0.036**3 / 64
    cl = periodic_layout(BOX_53, a=a)
    assert len(cl) == 64 and cl.layout.cells == (4, 4, 4)
    assert np.allclose(cl.centers.mean(axis=0), 0.0, atol=1e-15)


def test_periodic_layout_cells_per_side_matches_cell_volume():
    by_count = periodic_layout(BOX_53, cells_per_side=4)
    by_volume = periodic_layout(BOX_53, a=0.036**3 / 64)
    assert np.allclose(by_count.centers, by_volume.centers, atol=1e-15)


def test_periodic_layout_halving_a_halves_radii():
    box = (0, 1, 0, 1, 0, 1)
    r1 = periodic_layout(box, a=0.008).holes[0].shape.radius
    r2 = periodic_layout(box, a=0.004).holes[0].shape.radius
    assert r2 == pytest.approx(r1 / 2, rel=1e-12)


def test_periodic_layout_variable_cbar_radii_proportional():
    cl = periodic_layout((0, 1, 0, 1, 0, 1), a=0.008, cbar=lambda x: 1.0 + x[:, 0])
    radii = np.array([h.shape.radius for h in cl.holes])
    assert np.allclose(radii, (1.0 + cl.centers[:, 0]) * 0.008 / FOUR_PI, rtol=1e-12)


@pytest.mark.parametrize("cbar", [0.0, -1.0])
def test_periodic_layout_rejects_nonpositive_cbar(cbar):
    with pytest.raises(ValueError, match="positive"):
        periodic_layout((0, 1, 0, 1, 0, 1), a=0.008, cbar=cbar)


def test_periodic_layout_rejects_colliding_holes():
    with pytest.raises(ValueError, match="collide"):
        periodic_layout((0, 1, 0, 1, 0, 1), a=0.4, cbar=FOUR_PI)


def test_config_roundtrip(pair):
    back = parse_cluster_text(cluster_to_config(pair))
    assert np.array_equal(back.centers, pair.centers)
    assert np.array_equal(back.capacitances, pair.capacitances)


def test_mesh_hole_from_config(tmp_path):
    (tmp_path / "ball.mesh").write_text(format_mesh(icosphere(1)))
    (tmp_path / "c.cfg").write_text(
        "[hole.0]\ncenter = 0, 0, 0\nshape = mesh\nmesh = ball.mesh\nscale = 0.01\n"
        "[hole.1]\ncenter = 0.5, 0, 0\nshape = sphere\nradius = 0.02\n"
    )
    cl = load_cluster(str(tmp_path / "c.cfg"))
    assert isinstance(cl.holes[0].shape, MeshShape)
    assert cl.holes[0].shape.bounding_radius == pytest.approx(0.01)
    assert not cl.has_capacitances


@settings(max_examples=30, deadline=None)
@given(shift=st.tuples(*[st.floats(min_value=-10, max_value=10)] * 3))
def test_margins_are_translation_invariant(shift):
    cl = lattice(2, 0.1, 0.01)
    moved = cl.translated(shift)
    assert check_solvability_condition(moved) == pytest.approx(check_solvability_condition(cl), rel=1e-9)
    assert check_expansion_condition(moved) == pytest.approx(check_expansion_condition(cl), rel=1e-9)
