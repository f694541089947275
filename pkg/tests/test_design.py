import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holescatter.design import (
    DensityField,
    StagnationError,
    SubharmonicityError,
    cbar_from_p,
    cross_grid_errors,
    field_from_files,
    field_manifest,
    field_to_csv,
    from_function,
    layout_from_cbar,
    node_shape,
    p_from_rho,
    rho_from_p,
    roundtrip_error,
    solve_p,
)
from holescatter.oracle import loglog_slope

FOUR_PI = 4.0 * math.pi
UNIT = (0, 1, 0, 1, 0, 1)
BOX = (-0.018, 0.018, -0.018, 0.018, -0.018, 0.018)


def const(value, box=UNIT, h=0.125, kind="rho"):
    return from_function(box, h, lambda x: np.full(len(x), value), kind)


def test_node_shape_includes_boundary_layer():
    assert node_shape(UNIT, 0.25) == (5, 5, 5)
    with pytest.raises(ValueError):
        node_shape(UNIT, 0.3)


def test_unit_density_gives_unit_potential():
    p = p_from_rho(const(1.0))
    assert np.all(p.values == 1.0) and p.adjustment == 0.0


def test_heavier_density_and_boundary_forcing():
    p = p_from_rho(const(4.0))
    assert np.all(p.interior == 0.5)
    assert p.values[0, 3, 3] == 1.0 and p.adjustment == pytest.approx(0.5)


def test_density_roundtrip_in_the_interior():
    rng = np.random.default_rng(0)
    vals = rng.uniform(0.5, 3.0, node_shape(UNIT, 0.125))
    rho = DensityField(UNIT, 0.125, vals, "rho")
    back = rho_from_p(p_from_rho(rho))
    assert np.allclose(back.interior, rho.interior, rtol=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_nonpositive_density_rejected(bad):
    with pytest.raises(ValueError, match="positive"):
        p_from_rho(const(bad))


def test_constant_potential_gives_vacuous_medium():
    p = const(1.0, kind="p")
    assert np.all(cbar_from_p(p, allow_roundoff=True).interior == 0.0)
    with pytest.raises(SubharmonicityError):
        cbar_from_p(p)


def test_cosh_potential_recovers_k_squared_at_second_order():
    k = 2.0
    errs = []
    for h in (0.125, 0.0625, 0.03125):
        p = from_function(UNIT, h, lambda x: np.cosh(k * x[:, 0]) / np.cosh(k), "p")
        errs.append(np.max(np.abs(cbar_from_p(p).interior - k * k)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - 2.0) < 0.05)
    # leading truncation term of the 7-point stencil: h^2 k^4 / 12
    assert errs[-1] == pytest.approx(0.03125**2 * k**4 / 12, rel=0.01)


def test_interior_maximum_is_not_subharmonic():
    bumpy = from_function(UNIT, 0.125, lambda x: 1.0 + 0.1 * np.exp(-40 * np.sum((x - 0.5) ** 2, axis=1)), "p")
    with pytest.raises(SubharmonicityError, match=r"node \(4, 4, 4\)"):
        cbar_from_p(bumpy)


def test_density_chain_succeeds_iff_laplacian_is_positive():
    k = 1.5
    good = from_function(UNIT, 0.125, lambda x: (np.cosh(k * x[:, 0]) / np.cosh(k)) ** -2, "rho")
    cb = cbar_from_p(p_from_rho(good))
    assert np.all(cb.interior > 0)
    bad = from_function(UNIT, 0.125, lambda x: (1.0 + 0.2 * np.sin(np.pi * x[:, 0])) ** -2, "rho")
    with pytest.raises(SubharmonicityError):
        cbar_from_p(p_from_rho(bad))


def test_zero_cbar_gives_unit_potential():
    p = solve_p(0.0, UNIT, 0.125)
    assert np.allclose(p.values, 1.0, rtol=0, atol=1e-12)


def test_constant_cbar_on_small_box_is_symmetric_and_in_range():
    h = 0.036 / 12
    p = solve_p(FOUR_PI, BOX, h)
    v = p.values
    assert 0 < v.min() and v.max() <= 1.0 and np.all(p.interior < 1.0)
    for axis in range(3):
        assert np.allclose(v, np.flip(v, axis), rtol=0, atol=1e-12)
    assert np.allclose(v, v.transpose(1, 0, 2), atol=1e-12)
    assert np.allclose(v, v.transpose(2, 1, 0), atol=1e-12)


@pytest.mark.parametrize("h", [0.125, 0.0625, 0.03125])
def test_same_grid_roundtrip_is_exact_to_solver_tolerance(h):
    assert roundtrip_error(FOUR_PI, UNIT, h) < 1e-7


def test_cross_grid_roundtrip_is_second_order():
    errs, hs = cross_grid_errors(FOUR_PI, UNIT, 0.125, 3)
    assert errs[0] > errs[1] > errs[2]
    assert loglog_slope(hs, errs) >= 1.8


def test_negative_cbar_rejected():
    with pytest.raises(ValueError, match="non-negative"):
        solve_p(-1.0, UNIT, 0.25)


def test_stagnation_reports_history():
    with pytest.raises(StagnationError) as info:
        solve_p(FOUR_PI, UNIT, 0.0625, maxiter=2)
    assert len(info.value.history) == 2


def test_layout_from_constant_cbar():
    cl = layout_from_cbar(FOUR_PI, 0.0055, box=UNIT)
    assert np.allclose([h.shape.radius for h in cl.holes], 0.0055, rtol=1e-12)
    half = layout_from_cbar(FOUR_PI, 0.0055 / 2, box=UNIT)
    assert half.holes[0].shape.radius == pytest.approx(0.0055 / 2, rel=1e-12)
    with pytest.raises(ValueError, match="box"):
        layout_from_cbar(FOUR_PI, 0.0055)


def test_layout_from_varying_field_tracks_local_cbar():
    field = from_function(UNIT, 0.125, lambda x: 5.0 + 10.0 * x[:, 0], "cbar")
    cl = layout_from_cbar(field, 0.008)
    radii = np.array([h.shape.radius for h in cl.holes])
    x = cl.centers[:, 0]
    inner = (x >= 0.125) & (x <= 0.875)
    expected = (5.0 + 10.0 * x) * 0.008 / FOUR_PI
    assert np.allclose(radii[inner], expected[inner], rtol=1e-12)
    # cells beyond the last interior node take the nearest interior value
    assert np.allclose(radii[x < 0.125], (5.0 + 1.25) * 0.008 / FOUR_PI, rtol=1e-12)


def test_field_files_roundtrip():
    p = solve_p(FOUR_PI, UNIT, 0.25)
    cb = cbar_from_p(p)
    back = field_from_files(field_to_csv(cb), field_manifest(cb))
    assert back.kind == "cbar" and back.h == cb.h
    assert np.array_equal(np.isnan(back.values), np.isnan(cb.values))
    assert np.array_equal(back.interior, cb.interior)


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**31 - 1),
    scale=st.one_of(st.just(0.0), st.floats(min_value=1e-2, max_value=500.0)),
)
def test_discrete_maximum_principle(seed, scale):
    rng = np.random.default_rng(seed)
    shape = node_shape(UNIT, 0.125)
    field = DensityField(UNIT, 0.125, scale * rng.random(shape), "cbar")
    p = solve_p(field, UNIT, 0.125)
    assert np.all(p.values > 0) and np.all(p.values <= 1.0)
    if scale > 0:
        assert np.all(p.interior < 1.0)
