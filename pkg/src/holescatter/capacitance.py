"""Electrostatic capacitance of holes.

Spheres use ``C = 4 pi r``. Triangulated bodies are handled by a
piecewise-constant collocation panel method for the equilibrium density
``sigma`` solving ``int sigma(y) / (4 pi |x - y|) ds(y) = 1`` on the
surface; the capacitance is ``int sigma ds``.

Off-diagonal influence coefficients use one-point (centroid) quadrature;
the self panel is replaced by a flat disk of equal area, whose potential
at its centre is exactly ``radius / 2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SurfaceMesh:
    """Closed, orientable triangulated surface."""

    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("vertices must be (n, 3) and triangles (m, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        self.validate()

    def validate(self) -> None:
        if len(self.triangles) == 0:
            raise ValueError("mesh has no triangles")
        if np.any(self.areas <= 1e-14 * max(self.diameter, 1e-300) ** 2):
            raise ValueError("degenerate (zero-area) triangle")
        edges = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        # every directed edge once, and its reverse once, for a closed oriented surface
        directed, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts != 1):
            raise ValueError("mesh is not consistently oriented")
        keys = set(map(tuple, directed))
        if any((b, a) not in keys for a, b in keys):
            raise ValueError("mesh is not closed: some edge is not shared by exactly two triangles")

    @cached_property
    def _cross(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        if len(v) > 4000:
            from scipy.spatial import ConvexHull

            v = v[ConvexHull(v).vertices]
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    @property
    def n_panels(self) -> int:
        return len(self.triangles)

    def scaled(self, factor: float) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices * factor, self.triangles)

    def translated(self, shift) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices + np.asarray(shift, dtype=float), self.triangles)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> SurfaceMesh:
    """Geodesic sphere with ``20 * 4**subdivisions`` outward-oriented panels."""
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]  # fmt: skip
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]  # fmt: skip
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return SurfaceMesh(radius * np.array(verts), np.array(faces))


def load_mesh(path: str) -> SurfaceMesh:
    """Read an ASCII triangle soup.

    Format: a header line ``n_vertices n_triangles``, then one ``x y z`` line
    per vertex, then one ``i j k`` line (0-based) per triangle. Blank lines
    and ``#`` comments are ignored.
    """
    with open(path) as fh:
        return parse_mesh(fh.read())


def parse_mesh(text: str) -> SurfaceMesh:
    lines = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    nv, nt = int(lines[0][0]), int(lines[0][1])
    if len(lines) != 1 + nv + nt:
        raise ValueError(f"expected {nv} vertices and {nt} triangles, found {len(lines) - 1} data lines")
    verts = np.array([[float(x) for x in ln] for ln in lines[1 : 1 + nv]])
    tris = np.array([[int(x) for x in ln] for ln in lines[1 + nv :]])
    return SurfaceMesh(verts, tris)


def format_mesh(mesh: SurfaceMesh) -> str:
    out = [f"{len(mesh.vertices)} {len(mesh.triangles)}"]
    out += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    out += [" ".join(str(int(i)) for i in t) for t in mesh.triangles]
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class CapacitanceResult:
    capacitance: float
    density: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def n_panels(self) -> int:
        return len(self.density)

    @property
    def density_positive(self) -> bool:
        return bool(np.all(self.density > 0))

    def to_text(self) -> str:
        return (
            "[capacitance]\n"
            f"capacitance = {float(self.capacitance)!r}\n"
            f"residual = {float(self.residual)!r}\n"
            f"panels = {self.n_panels}\n"
            f"density_positive = {str(self.density_positive).lower()}\n"
        )


def capacitance_sphere(radius: float) -> float:
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    return FOUR_PI * radius


def scale_capacitance(c_reference: float, eps: float) -> float:
    """Capacitance of the body dilated by ``eps`` (capacitance is 1-homogeneous)."""
    if not eps > 0:
        raise ValueError("scale must be positive")
    return eps * c_reference


def single_layer_matrix(mesh: SurfaceMesh) -> np.ndarray:
    x = mesh.centroids
    dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    np.fill_diagonal(dist, 1.0)
    A = mesh.areas[None, :] / (FOUR_PI * dist)
    np.fill_diagonal(A, 0.5 * np.sqrt(mesh.areas / math.pi))
    return A


def solve_equilibrium_density(mesh: SurfaceMesh) -> CapacitanceResult:
    A = single_layer_matrix(mesh)
    ones = np.ones(mesh.n_panels)
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"singular panel system: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(A).max()):
        raise ValueError("singular panel system (degenerate mesh)")
    sigma = scipy.linalg.lu_solve(lu, ones)
    resid = float(np.max(np.abs(A @ sigma - ones)))
    cap = float(np.dot(sigma, mesh.areas))
    if not np.all(sigma > 0):
        logger.warning("equilibrium density has %d non-positive panels", int(np.sum(sigma <= 0)))
    return CapacitanceResult(cap, sigma, resid)


def hole_capacitance(shape, cache: dict | None = None) -> float:
    """Capacitance of a hole shape (sphere analytic, mesh by panel solve)."""
    radius = getattr(shape, "radius", None)
    if radius is not None:
        return capacitance_sphere(radius)
    cache = {} if cache is None else cache
    key = id(shape.mesh)
    if key not in cache:
        cache[key] = solve_equilibrium_density(shape.mesh).capacitance
    return scale_capacitance(cache[key], shape.scale)


def fill_capacitances(cluster):
    """Return ``cluster`` with every missing hole capacitance computed."""
    cache: dict = {}
    caps = [h.capacitance if h.capacitance is not None else hole_capacitance(h.shape, cache) for h in cluster.holes]
    return cluster.with_capacitances(caps)
