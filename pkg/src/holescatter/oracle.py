"""Exact single-sphere reference for spatially uniform boundary data.

For a density ``phi(t)`` that is constant over a sphere of radius ``r``,
the retarded single-layer potential reduces to a one-dimensional integral:

* on the sphere:  ``(c0/2) * int_{t-2r/c0}^{t} phi``
* at ``R > r``:   ``(r c0 / (2R)) * int_{t-(R+r)/c0}^{t-(R-r)/c0} phi``

Setting the on-sphere value to the incident field evaluated at the centre
gives a delay equation solved exactly by
``phi(t) = phi(t - 2r/c0) + (2/c0) g'(t)`` on a grid commensurate with
``2r/c0``.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import Cluster, Hole, SourceConfig
from .fields import scattered_asymptotic, single_hole_closed_form
from .retarded import assemble, march
from .signal import Trace

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class OracleProblem:
    radius: float
    center: tuple
    source: SourceConfig
    dt: float
    T: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.source_distance == 0.0:
            raise ValueError("source at the sphere centre")

    @property
    def source_distance(self) -> float:
        return float(np.linalg.norm(np.asarray(self.center) - np.asarray(self.source.position)))

    @property
    def round_trip_steps(self) -> int:
        """Number of grid steps in the across-sphere delay ``2r/c0``; must be integral."""
        k = 2.0 * self.radius / (self.source.c0 * self.dt)
        kr = round(k)
        if kr < 1 or abs(k - kr) > 1e-9 * max(1.0, k):
            raise ValueError(f"dt={self.dt} does not divide the delay 2r/c0={2 * self.radius / self.source.c0}")
        return int(kr)

    @property
    def hole(self) -> Hole:
        return Hole.sphere(self.center, self.radius, FOUR_PI * self.radius)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))


def commensurate_dt(radii, c0: float = 1.0, per_radius: int = 20) -> float:
    """Largest convenient step dividing ``2r/c0`` for every radius."""
    base = min(2.0 * r / c0 for r in radii) / per_radius
    for r in radii:
        k = 2.0 * r / c0 / base
        if abs(k - round(k)) > 1e-9 * k:
            raise ValueError("radii are not commensurate with a common step")
    return base


def uniform_rhs(problem: OracleProblem, t):
    """Incident field at the centre, negated: ``-lambda(t - |z-z*|/c0) / (4 pi |z-z*|)``."""
    d = problem.source_distance
    return -problem.source.signal(np.asarray(t, dtype=float) - d / problem.source.c0) / (FOUR_PI * d)


def uniform_rhs_derivative(problem: OracleProblem, t):
    d = problem.source_distance
    return -problem.source.signal.derivative(np.asarray(t, dtype=float) - d / problem.source.c0, 1) / (FOUR_PI * d)


def solve_uniform_density(problem: OracleProblem) -> Trace:
    K = problem.round_trip_steps
    n = problem.n_steps
    t = problem.dt * np.arange(n + 1)
    inc = (2.0 / problem.source.c0) * uniform_rhs_derivative(problem, t)
    phi = np.zeros(n + 1)
    for k in range(n + 1):
        phi[k] = inc[k] + (phi[k - K] if k >= K else 0.0)
    return Trace(0.0, problem.dt, phi)


def _cumulative(phi: Trace) -> np.ndarray:
    s = phi.samples
    return np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * phi.dt)])


def _antiderivative(phi: Trace, cum: np.ndarray, s) -> np.ndarray:
    """Trapezoidal ``int_0^s phi`` with linear interpolation inside the last cell."""
    s = np.asarray(s, dtype=float)
    pos = (s - phi.t0) / phi.dt
    if np.any(pos > len(phi) - 1 + 1e-9):
        raise ValueError("integration limit beyond the density record")
    pos = np.clip(pos, 0.0, len(phi) - 1)
    k = np.minimum(np.floor(pos).astype(int), len(phi) - 2)
    frac = (pos - k) * phi.dt
    p = phi.samples
    slope = (p[k + 1] - p[k]) / phi.dt
    return cum[k] + p[k] * frac + 0.5 * slope * frac**2


def window_integral(phi: Trace, lo, hi) -> np.ndarray:
    cum = _cumulative(phi)
    return _antiderivative(phi, cum, hi) - _antiderivative(phi, cum, lo)


def density_residual(problem: OracleProblem, phi: Trace) -> float:
    """Max defect of ``(c0/2) int_{t-2r/c0}^t phi = g(t)`` on the grid."""
    c0 = problem.source.c0
    t = phi.times
    lhs = 0.5 * c0 * window_integral(phi, t - 2.0 * problem.radius / c0, t)
    return float(np.max(np.abs(lhs - uniform_rhs(problem, t))))


def exterior_field(problem: OracleProblem, phi: Trace, x, t):
    """Exact exterior potential of the uniform density at ``x`` (``|x - z| > r``)."""
    R = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(problem.center)))
    r = problem.radius
    if R <= r:
        raise ValueError("evaluation point is not outside the sphere")
    c0 = problem.source.c0
    t = np.asarray(t, dtype=float)
    out = (r * c0 / (2.0 * R)) * window_integral(phi, t - (R + r) / c0, t - (R - r) / c0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class OracleComparison:
    radii: tuple
    max_diff: tuple = field(default=())
    l2_diff: tuple = field(default=())
    max_diff_march: tuple = field(default=())
    density_residual: tuple = field(default=())
    slope: float = math.nan

    def to_text(self, threshold: float | None = None) -> str:
        cp = configparser.ConfigParser()
        sec = {
            "radii": ", ".join(repr(float(r)) for r in self.radii),
            "max_diff": ", ".join(repr(float(v)) for v in self.max_diff),
            "l2_diff": ", ".join(repr(float(v)) for v in self.l2_diff),
            "max_diff_marched": ", ".join(repr(float(v)) for v in self.max_diff_march),
            "density_residual": ", ".join(repr(float(v)) for v in self.density_residual),
            "slope": "undefined" if not math.isfinite(self.slope) else repr(float(self.slope)),
        }
        if threshold is not None:
            sec["threshold"] = repr(float(threshold))
            sec["verdict"] = "pass" if (math.isfinite(self.slope) and self.slope >= threshold) else "fail"
        cp["oracle"] = sec
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``; NaN when undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(y <= 0) or np.ptp(np.log(x)) == 0 or not np.all(np.isfinite(y)):
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def compare_single(problem: OracleProblem, probes) -> dict:
    """Oracle vs closed form (and vs the marched point-source model) at probes."""
    phi = solve_uniform_density(problem)
    t = phi.times
    hole = problem.hole
    cluster = Cluster((hole,))
    sol = march(assemble(cluster, problem.source), problem.T, dt=problem.dt)
    mx, l2, mm = 0.0, 0.0, 0.0
    for x in np.asarray(probes, dtype=float).reshape(-1, 3):
        ref = exterior_field(problem, phi, x, t)
        closed = single_hole_closed_form(hole, problem.source, x, t)
        marched = scattered_asymptotic(cluster, sol, x, t, problem.source.c0)
        diff = ref - closed
        mx = max(mx, float(np.max(np.abs(diff))))
        l2 = max(l2, float(np.sqrt(np.trapezoid(diff**2, t))))
        mm = max(mm, float(np.max(np.abs(ref - marched))))
    return {"max": mx, "l2": l2, "max_marched": mm, "density_residual": density_residual(problem, phi)}


def compare_with_asymptotic(center, source: SourceConfig, radii, probes, T: float, dt: float | None = None):
    """Sweep sphere radii and fit the order of ``|oracle - asymptotic|`` in the radius."""
    radii = tuple(float(r) for r in radii)
    dt = commensurate_dt(radii, source.c0) if dt is None else dt
    rows = [compare_single(OracleProblem(r, center, source, dt, T), probes) for r in radii]
    mx = tuple(r["max"] for r in rows)
    return OracleComparison(
        radii=radii,
        max_diff=mx,
        l2_diff=tuple(r["l2"] for r in rows),
        max_diff_march=tuple(r["max_marched"] for r in rows),
        density_residual=tuple(r["density_residual"] for r in rows),
        slope=loglog_slope(radii, mx),
    )
