"""Effective-medium volume equation on a voxelized box.

Solves, for ``x`` in the box ``Omega``::

    v(x, t) + int_Omega cbar(z) v(z, t - |x - z|/c0) / (4 pi |x - z|) dz = -u_inc(x, t)

with midpoint quadrature over cubic voxels. The singular self-cell integral
is replaced by the equal-volume ball, ``cbar * r_v**2 / 2``, taken at zero
delay. Outside the box the effective scattered field is

    W(x, t) = sum_m cbar_m h^3 v(z_m, t - |x - z_m|/c0) / (4 pi |x - z_m|).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .cluster import Cluster, SourceConfig, periodic_layout
from .fields import default_exclusion, excluded_mask, probe_traces
from .retarded import assemble, march
from .signal import DelayedSum, check_order, lookup_many

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


class CFLError(ValueError):
    """Time step too large for explicit volume marching."""


@dataclass(frozen=True)
class VoxelGrid:
    box: tuple
    h: float
    cbar: Union[float, np.ndarray, Callable] = 0.0

    def __post_init__(self):
        box = tuple(float(v) for v in self.box)
        if len(box) != 6:
            raise ValueError("box is (xmin, xmax, ymin, ymax, zmin, zmax)")
        object.__setattr__(self, "box", box)
        if not self.h > 0:
            raise ValueError("voxel spacing must be positive")
        L = np.asarray(box[1::2]) - np.asarray(box[0::2])
        n = np.rint(L / self.h).astype(int)
        if np.any(n < 1) or not np.allclose(n * self.h, L, rtol=1e-9, atol=0):
            raise ValueError(f"spacing {self.h} does not tile the box {box}")
        if np.any(self.cbar_values < 0):
            raise ValueError("scaled capacitance must be non-negative")

    @classmethod
    def cubic(cls, box, per_side: int, cbar=0.0) -> "VoxelGrid":
        return cls(box, (box[1] - box[0]) / per_side, cbar)

    @property
    def shape(self) -> tuple:
        L = np.asarray(self.box[1::2]) - np.asarray(self.box[0::2])
        return tuple(int(v) for v in np.rint(L / self.h))

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.shape))

    @property
    def centers(self) -> np.ndarray:
        lo = np.asarray(self.box[0::2])
        axes = [lo[k] + self.h * (np.arange(n) + 0.5) for k, n in enumerate(self.shape)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    @property
    def volume(self) -> float:
        return self.h**3

    @property
    def ball_radius(self) -> float:
        return (3.0 * self.volume / FOUR_PI) ** (1.0 / 3.0)

    @property
    def cbar_values(self) -> np.ndarray:
        c = self.cbar
        if callable(c):
            vals = np.asarray(c(self.centers), dtype=float).reshape(-1)
        elif np.ndim(c) == 0:
            vals = np.full(self.n_voxels, float(c))
        else:
            vals = np.asarray(c, dtype=float).reshape(-1)
            if len(vals) != self.n_voxels:
                raise ValueError("per-voxel cbar has the wrong size")
        return vals

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.box[0::2])
        hi = np.asarray(self.box[1::2])
        return bool(np.all(x >= lo) and np.all(x <= hi))


@dataclass(frozen=True)
class VolumeKernel:
    weights: np.ndarray = field(repr=False)
    delays: np.ndarray = field(repr=False)
    self_weights: np.ndarray = field(repr=False)


def assemble_volume_kernel(grid: VoxelGrid, c0: float = 1.0) -> VolumeKernel:
    """Pair weights ``cbar_n h^3 / (4 pi |z_m - z_n|)``, delays and ball self-weights."""
    z = grid.centers
    cb = grid.cbar_values
    dist = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(dist, 1.0)
    w = cb[None, :] * grid.volume / (FOUR_PI * dist)
    np.fill_diagonal(w, 0.0)
    delays = dist / c0
    np.fill_diagonal(delays, 0.0)
    self_w = cb * grid.ball_radius**2 / 2.0
    return VolumeKernel(w, delays, self_w)


@dataclass(frozen=True)
class VolumeSolution:
    dt: float
    samples: np.ndarray = field(repr=False)
    interp: str = "cubic"
    precausal_max: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.shape[1])

    def dump_rows(self):
        """``(voxel, time, value)`` rows for debugging dumps."""
        for m in range(self.samples.shape[0]):
            for n, t in enumerate(self.times):
                yield m, float(t), float(self.samples[m, n])


def incident_at(points, source: SourceConfig, t) -> np.ndarray:
    r = np.linalg.norm(np.asarray(points) - np.asarray(source.position), axis=1)
    if np.any(r == 0):
        raise ValueError("source coincides with a voxel centre")
    return source.signal(np.asarray(t)[None, :] - (r / source.c0)[:, None]) / (FOUR_PI * r[:, None])


def march_volume(
    grid: VoxelGrid,
    source: SourceConfig,
    T: float,
    dt: float | None = None,
    interp: str = "cubic",
    tol: float = 1e-10,
) -> VolumeSolution:
    """Explicit marching; requires ``dt <= h / c0`` so every neighbour lookup is in the past."""
    check_order(interp)
    if not tol > 0:
        raise ValueError("tol must be positive")
    c0 = source.c0
    if dt is None:
        dt = T / math.ceil(T * c0 / grid.h - 1e-9)
    if dt > grid.h / c0 * (1 + 1e-12):
        raise CFLError(f"dt={dt:.6g} exceeds h/c0={grid.h / c0:.6g}")
    n_steps = int(math.ceil(T / dt - 1e-9))
    z = grid.centers
    N = len(z)
    times = dt * np.arange(n_steps + 1)
    forcing = -incident_at(z, source, times)

    kern = assemble_volume_kernel(grid, c0)
    ii, jj = np.nonzero(~np.eye(N, dtype=bool))
    coupling = DelayedSum(kern.delays[ii, jj] / dt, jj, kern.weights[ii, jj], ii, N, interp)
    diag = 1.0 + kern.self_weights
    del kern, ii, jj
    hist = np.zeros((n_steps + 1, N))
    for n in range(n_steps + 1):
        hist[n] = (forcing[:, n] - coupling(hist, n)) / diag
    samples = hist.T.copy()

    r = np.linalg.norm(z - np.asarray(source.position), axis=1)
    before = times[None, :] < (r / c0)[:, None]
    pre = float(np.max(np.abs(samples[before]))) if before.any() else 0.0
    if pre > tol:
        logger.warning("volume solution exceeds tol %.3g before source arrival (%.3g)", tol, pre)
    return VolumeSolution(dt, samples, interp, pre)


def exterior_W(grid: VoxelGrid, solution: VolumeSolution, source: SourceConfig, x, t):
    """Effective scattered field at an exterior point ``x``."""
    x = np.asarray(x, dtype=float)
    if grid.contains(x):
        raise ValueError("exterior_W needs a point outside the box")
    t = np.asarray(t, dtype=float)
    z = grid.centers
    r = np.linalg.norm(z - x, axis=1)
    coef = grid.cbar_values * grid.volume / (FOUR_PI * r)
    live = coef != 0
    if not live.any():
        out = np.zeros(t.shape)
        return float(out) if out.ndim == 0 else out
    shape = (-1,) + (1,) * t.ndim
    vals = lookup_many(
        solution.samples[live], solution.dt, t[None] - (r[live] / source.c0).reshape(shape), solution.interp
    )
    out = np.sum(coef[live].reshape(shape) * vals, axis=0)
    return float(out) if out.ndim == 0 else out


def relative_l2(a, b, t) -> float:
    """``||a - b|| / ||b||`` in L2 over time; 0 when both vanish."""
    num = math.sqrt(float(np.trapezoid((np.asarray(a) - np.asarray(b)) ** 2, t)))
    den = math.sqrt(float(np.trapezoid(np.asarray(b) ** 2, t)))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


@dataclass(frozen=True)
class MediumComparison:
    n_holes: int
    relative_l2: tuple
    max_abs: tuple

    @property
    def worst_relative_l2(self) -> float:
        return max(self.relative_l2) if self.relative_l2 else 0.0


def compare_cluster_vs_medium(
    cluster: Cluster,
    grid: VoxelGrid,
    source: SourceConfig,
    probes,
    T: float,
    medium: VolumeSolution | None = None,
    interp: str = "cubic",
) -> MediumComparison:
    """Probe-trace differences between the point-source cluster field and ``W``.

    The cluster must come from :func:`periodic_layout` over the same box and
    the same (constant) scaled capacitance as the grid.
    """
    lay = cluster.layout
    cb = grid.cbar_values
    if len(cluster) == 0:
        # the empty cluster is the perforation of a medium with zero scaled capacitance
        if np.any(cb != 0):
            raise ValueError("an empty cluster only matches a medium with zero scaled capacitance")
    elif lay is None:
        raise ValueError("cluster was not generated by periodic_layout")
    else:
        if not np.allclose(lay.box, grid.box, rtol=1e-12, atol=0):
            raise ValueError("cluster and voxel grid cover different boxes")
        if isinstance(lay.cbar, str):
            raise ValueError("comparison needs a constant scaled capacitance")
        if not np.allclose(cb, lay.cbar, rtol=1e-12):
            raise ValueError("cluster and voxel grid use different scaled capacitance")
    points = np.asarray(probes, dtype=float).reshape(-1, 3)
    for p in points:
        if grid.contains(p):
            raise ValueError(f"probe {tuple(p)} is inside the medium box")
    if np.any(excluded_mask(points, cluster, source, default_exclusion(cluster))):
        raise ValueError("probe inside an exclusion zone")
    if medium is None:
        medium = march_volume(grid, source, T, interp=interp)
    t = medium.times
    if len(cluster):
        sol = march(assemble(cluster, source), T, interp=interp)
        field_c = probe_traces(cluster, sol, source, points, t, "scattered")
    else:
        field_c = np.zeros((len(points), len(t)))
    rel, mx = [], []
    for k, p in enumerate(points):
        w = exterior_W(grid, medium, source, p, t)
        rel.append(relative_l2(field_c[k], w, t))
        mx.append(float(np.max(np.abs(field_c[k] - w))))
    return MediumComparison(len(cluster), tuple(rel), tuple(mx))


def refinement_sweep(box, cbar: float, source: SourceConfig, probes, T: float, cells_per_side=(3, 4, 5),
                     voxels_per_side: int = 12, interp: str = "cubic"):
    """Cluster-vs-medium difference for a sequence of lattice refinements.

    The medium is solved once; each lattice gets its own retarded system.
    """
    grid = VoxelGrid.cubic(box, voxels_per_side, cbar)
    medium = march_volume(grid, source, T, interp=interp)
    out = []
    for n in cells_per_side:
        cl = periodic_layout(box, cbar=cbar, cells_per_side=n)
        out.append(compare_cluster_vs_medium(cl, grid, source, probes, T, medium=medium, interp=interp))
    return out
