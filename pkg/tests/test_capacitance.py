import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from holescatter.capacitance import (
    SurfaceMesh,
    capacitance_sphere,
    fill_capacitances,
    format_mesh,
    icosphere,
    parse_mesh,
    scale_capacitance,
    solve_equilibrium_density,
)
from holescatter.cluster import Cluster, Hole, MeshShape

FOUR_PI = 4.0 * math.pi


@pytest.fixture(scope="module")
def sphere_results():
    return {k: solve_equilibrium_density(icosphere(k)) for k in (2, 3, 4)}


@pytest.mark.parametrize(
    "radius, expected",
    [(0.01, 0.125664), (1.0, FOUR_PI), (0.0055, 0.069115)],
)
def test_capacitance_sphere(radius, expected):
    assert capacitance_sphere(radius) == pytest.approx(expected, rel=5e-6)


def test_capacitance_sphere_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        capacitance_sphere(0.0)


@pytest.mark.parametrize("c, eps, expected", [(FOUR_PI, 0.0055, 0.069115), (2.5, 1.0, 2.5)])
def test_scale_capacitance(c, eps, expected):
    assert scale_capacitance(c, eps) == pytest.approx(expected, rel=5e-6)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_icosphere_is_closed_and_oriented(k):
    m = icosphere(k)
    assert m.n_panels == 20 * 4**k
    outward = np.einsum("ij,ij->i", m.normals, m.centroids)
    assert np.all(outward > 0)


def test_open_mesh_is_rejected():
    m = icosphere(1)
    with pytest.raises(ValueError, match="closed|oriented"):
        SurfaceMesh(m.vertices, m.triangles[1:])


def test_inconsistent_orientation_is_rejected():
    m = icosphere(1)
    tris = m.triangles.copy()
    tris[0] = tris[0][::-1]
    with pytest.raises(ValueError, match="oriented|closed"):
        SurfaceMesh(m.vertices, tris)


def test_degenerate_panel_is_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], dtype=float)
    with pytest.raises(ValueError, match="degenerate"):
        SurfaceMesh(v, np.array([[0, 1, 2], [0, 2, 1], [0, 1, 3], [0, 3, 1]]))


# Frozen relative errors of the panel capacitance against 4 pi.
@pytest.mark.parametrize(
    "k, rel_err",
    [(2, -0.011130248532243314), (3, -0.0019175399205557664), (4, -1.782967235608446e-05)],
)
def test_unit_sphere_capacitance_frozen(sphere_results, k, rel_err):
    r = sphere_results[k]
    assert r.capacitance / FOUR_PI - 1 == pytest.approx(rel_err, rel=1e-6)
    assert r.residual < 1e-12
    assert r.density_positive


def test_unit_sphere_capacitance_within_one_percent_at_2000_panels(sphere_results):
    r = sphere_results[4]
    assert r.n_panels >= 2000
    assert abs(r.capacitance / FOUR_PI - 1) < 0.01


def test_density_approaches_uniform_in_mean_square(sphere_results):
    rms = [np.sqrt(np.mean((sphere_results[k].density - 1) ** 2)) for k in (2, 3, 4)]
    assert rms[0] > rms[1] > rms[2]
    assert rms[2] < 0.011


def test_uniform_density_gives_unit_potential_on_the_unit_sphere():
    # Axisymmetric surface quadrature of int sigma / (4 pi |x - y|) ds with sigma = 1
    # at the north pole: |x - y| = 2 sin(theta / 2), ds = 2 pi sin(theta) d theta.
    val, _ = quad(lambda th: 2 * math.pi * math.sin(th) / (FOUR_PI * 2 * math.sin(th / 2)), 0, math.pi)
    assert val == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_capacitance_scaling_law(eps):
    m = icosphere(2)
    base = solve_equilibrium_density(m).capacitance
    scaled = solve_equilibrium_density(m.scaled(eps)).capacitance
    assert scaled == pytest.approx(eps * base, rel=1e-10)


def test_capacitance_is_translation_invariant():
    m = icosphere(2)
    a = solve_equilibrium_density(m).capacitance
    b = solve_equilibrium_density(m.translated((3.0, -1.0, 2.0))).capacitance
    assert b == pytest.approx(a, rel=1e-10)


def test_mesh_text_roundtrip():
    m = icosphere(1)
    back = parse_mesh(format_mesh(m))
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)


def test_mesh_text_count_mismatch():
    lines = format_mesh(icosphere(0)).splitlines()
    with pytest.raises(ValueError, match="expected"):
        parse_mesh("\n".join(lines[:-1]))


def test_fill_capacitances_mixes_analytic_and_panel():
    mesh = icosphere(2)
    cl = Cluster((Hole.sphere((0, 0, 0), 0.01), Hole((1, 0, 0), MeshShape(mesh, 0.02))))
    caps = fill_capacitances(cl).capacitances
    assert caps[0] == pytest.approx(FOUR_PI * 0.01, rel=1e-15)
    assert caps[1] == pytest.approx(0.02 * solve_equilibrium_density(mesh).capacitance, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(eps=st.floats(min_value=1e-4, max_value=1e2))
def test_scaling_law_property(eps):
    m = icosphere(1)
    base = solve_equilibrium_density(m).capacitance
    assert solve_equilibrium_density(m.scaled(eps)).capacitance == pytest.approx(eps * base, rel=1e-9)
