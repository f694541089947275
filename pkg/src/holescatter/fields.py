"""Incident, scattered and total fields at probes and on lattices."""

from __future__ import annotations

import configparser
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import Cluster, Hole, SourceConfig, separations
from .retarded import SystemSolution
from .signal import lookup_many

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
EXCLUSION_FACTOR = 5.0
WHICH = ("incident", "scattered", "total")


def default_exclusion(cluster: Cluster) -> float:
    """Five hole diameters, or 0 for an empty cluster."""
    if len(cluster) == 0:
        return 0.0
    a, _, _ = separations(cluster)
    return EXCLUSION_FACTOR * a


@dataclass(frozen=True)
class ProbeSet:
    points: np.ndarray = field(repr=False)
    exclusion: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def validate(self, cluster: Cluster, source: SourceConfig) -> None:
        bad = excluded_mask(self.points, cluster, source, self.exclusion)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(f"probe {k} at {tuple(self.points[k])} lies inside the exclusion zone")


@dataclass(frozen=True)
class FieldGrid:
    """Lattice ``origin + i*step_u*u + j*step_v*v (+ k*step_w*w)`` sampled at ``times``."""

    origin: tuple
    axes: tuple
    counts: tuple
    times: tuple

    def __post_init__(self):
        axes = tuple(tuple(float(x) for x in ax) for ax in self.axes)
        if len(axes) != len(self.counts) or len(axes) not in (2, 3):
            raise ValueError("grid needs two (planar) or three (volumetric) axes with matching counts")
        if any(np.linalg.norm(ax) <= 0 for ax in axes):
            raise ValueError("lattice spacing must be positive")
        if any(int(c) < 1 for c in self.counts):
            raise ValueError("lattice counts must be positive")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))

    @classmethod
    def plane(cls, lo_u, hi_u, lo_v, hi_v, n_u, n_v, height, times, normal_axis: int = 2):
        """Axis-aligned plane ``x_{normal_axis} = height`` spanning the given ranges."""
        u, v = [k for k in range(3) if k != normal_axis]
        origin = [0.0, 0.0, 0.0]
        origin[u], origin[v], origin[normal_axis] = lo_u, lo_v, height
        du = [0.0, 0.0, 0.0]
        dv = [0.0, 0.0, 0.0]
        du[u] = (hi_u - lo_u) / max(n_u - 1, 1)
        dv[v] = (hi_v - lo_v) / max(n_v - 1, 1)
        return cls(tuple(origin), (tuple(du), tuple(dv)), (n_u, n_v), tuple(times))

    @property
    def points(self) -> np.ndarray:
        idx = np.meshgrid(*[np.arange(c) for c in self.counts], indexing="ij")
        pts = np.broadcast_to(np.asarray(self.origin), idx[0].shape + (3,)).copy()
        for k, ax in enumerate(self.axes):
            pts = pts + idx[k][..., None] * np.asarray(ax)
        return pts.reshape(-1, 3)


def excluded_mask(points, cluster: Cluster, source: SourceConfig, exclusion: float) -> np.ndarray:
    """True where a point is within ``exclusion`` of a hole centre, inside a hole, or at the source."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    bad = np.linalg.norm(pts - np.asarray(source.position), axis=1) <= max(exclusion, 0.0)
    if len(cluster):
        d = np.linalg.norm(pts[:, None, :] - cluster.centers[None, :, :], axis=-1)
        rad = np.array([h.shape.bounding_radius for h in cluster.holes])
        bad |= np.any((d <= exclusion) | (d <= rad[None, :]), axis=1)
    return bad


def incident(source: SourceConfig, x, t):
    """Point-source wave ``lambda(t - |x - z*|/c0) / (4 pi |x - z*|)``."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(source.position)))
    if r == 0.0:
        raise ValueError("incident field is singular at the source point")
    return source.signal(np.asarray(t, dtype=float) - r / source.c0) / (FOUR_PI * r)


def _check_outside(cluster: Cluster, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(cluster) == 0:
        return np.zeros(0)
    r = np.linalg.norm(cluster.centers - x, axis=1)
    rad = np.array([h.shape.bounding_radius for h in cluster.holes])
    if np.any(r <= rad):
        raise ValueError(f"point {tuple(x)} lies inside hole {int(np.argmin(r - rad))}")
    return r


def scattered_asymptotic(cluster: Cluster, solution: SystemSolution, x, t, c0: float = 1.0):
    """Point-source sum ``sum_j C_j alpha_j(t - |x - z_j|/c0) / (4 pi |x - z_j|)``."""
    t = np.asarray(t, dtype=float)
    if len(cluster) == 0:
        out = np.zeros(t.shape)
        return float(out) if out.ndim == 0 else out
    r = _check_outside(cluster, x)
    caps = cluster.capacitances
    shape = (-1,) + (1,) * t.ndim
    vals = lookup_many(solution.samples, solution.dt, t[None] - (r / c0).reshape(shape), solution.interp)
    out = np.sum((caps / (FOUR_PI * r)).reshape(shape) * vals, axis=0)
    return float(out) if out.ndim == 0 else out


def single_hole_closed_form(hole: Hole, source: SourceConfig, x, t):
    """``-C0 lambda(t - |x-z|/c0 - |z-z*|/c0) / (16 pi^2 |x-z| |z-z*|)`` for one hole."""
    z = np.asarray(hole.center)
    rx = float(np.linalg.norm(np.asarray(x, dtype=float) - z))
    rs = float(np.linalg.norm(z - np.asarray(source.position)))
    if rx == 0.0 or rs == 0.0:
        raise ValueError("coincident points in the single-hole formula")
    if hole.capacitance is None:
        raise ValueError("hole capacitance not computed")
    lam = source.signal(np.asarray(t, dtype=float) - (rx + rs) / source.c0)
    return -hole.capacitance * lam / (16.0 * math.pi**2 * rx * rs)


def total(cluster: Cluster, solution: SystemSolution, source: SourceConfig, x, t):
    return incident(source, x, t) + scattered_asymptotic(cluster, solution, x, t, source.c0)


def probe_traces(cluster, solution, source, points, times, which: str = "scattered") -> np.ndarray:
    """Field histories at each probe; shape ``(n_probes, n_times)``."""
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(points), len(times)))
    for k, x in enumerate(np.asarray(points, dtype=float).reshape(-1, 3)):
        if which in ("incident", "total"):
            out[k] += incident(source, x, times)
        if which in ("scattered", "total"):
            out[k] += scattered_asymptotic(cluster, solution, x, times, source.c0)
    return out


@dataclass(frozen=True)
class Snapshots:
    points: np.ndarray = field(repr=False)
    times: tuple
    values: np.ndarray = field(repr=False)
    which: str
    n_excluded: int

    def to_csv(self, k: int) -> str:
        """Snapshot ``k`` as ``x,y,z,value`` rows; excluded points have an empty value."""
        lines = ["x,y,z,value"]
        for p, v in zip(self.points, self.values[k]):
            val = "" if np.isnan(v) else repr(float(v))
            lines.append(",".join([repr(float(c)) for c in p] + [val]))
        return "\n".join(lines) + "\n"


def grid_eval(cluster, solution, source, grid: FieldGrid, which: str = "scattered", exclusion=None) -> Snapshots:
    """Evaluate ``which`` on every lattice point at every grid time.

    Points in an exclusion zone (near a hole or the source) get NaN; the
    number of such points is reported in ``n_excluded``.
    """
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    pts = grid.points
    excl = default_exclusion(cluster) if exclusion is None else exclusion
    bad = excluded_mask(pts, cluster, source, excl)
    times = np.asarray(grid.times, dtype=float)
    vals = np.full((len(times), len(pts)), np.nan)
    good = np.nonzero(~bad)[0]
    if len(good):
        vals[:, good] = probe_traces(cluster, solution, source, pts[good], times, which).T
    return Snapshots(pts, grid.times, vals, which, int(bad.sum()))


def snapshot_manifest(grid: FieldGrid, snaps: Snapshots, files) -> str:
    cp = configparser.ConfigParser()
    cp["grid"] = {
        "origin": ", ".join(repr(float(v)) for v in grid.origin),
        "axes": "; ".join(", ".join(repr(float(v)) for v in ax) for ax in grid.axes),
        "counts": ", ".join(str(c) for c in grid.counts),
        "times": ", ".join(repr(float(t)) for t in grid.times),
        "which": snaps.which,
        "excluded_points": str(snaps.n_excluded),
        "files": ", ".join(files),
        "missing_value": "empty field",
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def traces_to_csv(times, traces, names) -> str:
    lines = [",".join(["time"] + list(names))]
    for n, t in enumerate(times):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in traces[:, n]]))
    return "\n".join(lines) + "\n"
