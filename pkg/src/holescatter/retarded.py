"""Retarded-in-time algebraic system for the point-source signals.

For holes ``i = 1..M`` the signals ``alpha_i`` satisfy::

    alpha_i(t) + sum_{j != i} w_ij * alpha_j(t - tau_ij) = f_i(t)

with ``w_ij = C_j / (4 pi |z_i - z_j|)``, ``tau_ij = |z_i - z_j| / c0`` and
forcing ``f_i(t) = -lambda(t - |z_i - z*| / c0) / (4 pi |z_i - z*|)``.

Because every coupling is delayed, the system is lower-triangular in time
on a uniform grid. Steps where every delay is at least ``dt`` are explicit;
otherwise the current-step unknowns are found by Jacobi iteration, which
contracts when the solvability margin is below one.
"""

from __future__ import annotations

import configparser
import io
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cluster import Cluster, SourceConfig, check_solvability_condition
from .signal import DelayedSum, Trace, causal_record, check_order, stencil

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
MAX_EXPLICIT_STEPS = 65536
FALLBACK_STEPS = 4096
MIN_STEPS = 1024


class SolvabilityError(ValueError):
    """The solvability margin is >= 1 and no override was given."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RetardedSystem:
    centers: np.ndarray = field(repr=False)
    capacitances: np.ndarray = field(repr=False)
    delays: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    source_delays: np.ndarray = field(repr=False)
    source_gains: np.ndarray = field(repr=False)
    signal: object
    c0: float
    margin: float

    @property
    def M(self) -> int:
        return len(self.centers)

    @property
    def min_delay(self) -> float:
        if self.M < 2:
            return math.inf
        off = ~np.eye(self.M, dtype=bool)
        return float(self.delays[off].min())

    def forcing(self, t) -> np.ndarray:
        """``f_i(t)`` for every hole; shape ``(M,) + shape(t)``."""
        t = np.asarray(t, dtype=float)
        shift = self.source_delays.reshape((-1,) + (1,) * t.ndim)
        gain = self.source_gains.reshape(shift.shape)
        return -gain * self.signal(t[None] - shift)

    def forcing_derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        shift = self.source_delays.reshape((-1,) + (1,) * t.ndim)
        gain = self.source_gains.reshape(shift.shape)
        return -gain * self.signal.derivative(t[None] - shift, 1)


@dataclass(frozen=True)
class SystemSolution:
    dt: float
    samples: np.ndarray = field(repr=False)
    iterations: np.ndarray = field(repr=False)
    max_step_residual: float = 0.0
    interp: str = "cubic"
    forced: bool = False

    @property
    def M(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.shape[1])

    @property
    def T(self) -> float:
        return self.dt * (self.samples.shape[1] - 1)

    @property
    def traces(self) -> list:
        return [Trace(0.0, self.dt, row) for row in self.samples]

    def to_csv(self) -> str:
        lines = [",".join(["time"] + [f"alpha_{i}" for i in range(self.M)])]
        for n, t in enumerate(self.times):
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in self.samples[:, n]]))
        return "\n".join(lines) + "\n"

    def metadata_text(self, margin: float) -> str:
        cp = configparser.ConfigParser()
        cp["solution"] = {
            "holes": str(self.M),
            "dt": repr(float(self.dt)),
            "steps": str(self.samples.shape[1]),
            "interp": self.interp,
            "max_iterations": str(int(self.iterations.max()) if self.iterations.size else 0),
            "max_step_residual": repr(float(self.max_step_residual)),
            "solvability_margin": repr(float(margin)),
            "forced": str(self.forced).lower(),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def assemble(cluster: Cluster, source: SourceConfig) -> RetardedSystem:
    caps = cluster.capacitances
    source.check_outside(cluster)
    z = cluster.centers
    c0 = source.c0
    dist = cluster.center_distances()
    off = ~np.eye(len(cluster), dtype=bool)
    if np.any(dist[off] <= 0):
        raise ValueError("coincident hole centres")
    delays = np.where(off, dist / c0, 0.0)
    with np.errstate(divide="ignore"):
        weights = np.where(off, caps[None, :] / (FOUR_PI * np.where(off, dist, 1.0)), 0.0)
    rs = np.linalg.norm(z - np.asarray(source.position), axis=1)
    return RetardedSystem(
        centers=z,
        capacitances=caps,
        delays=delays,
        weights=weights,
        source_delays=rs / c0,
        source_gains=1.0 / (FOUR_PI * rs),
        signal=source.signal,
        c0=c0,
        margin=check_solvability_condition(cluster),
    )


def default_dt(system: RetardedSystem, T: float) -> float:
    """Explicit step ``min(tau_min / 4, T / 1024)`` when affordable, else ``T / 4096``."""
    dt = min(system.min_delay / 4.0, T / MIN_STEPS)
    if T / dt > MAX_EXPLICIT_STEPS:
        dt = T / FALLBACK_STEPS
    return dt


def _split_pairs(system: RetardedSystem, dt: float):
    M = system.M
    ii, jj = np.nonzero(~np.eye(M, dtype=bool))
    q = system.delays[ii, jj] / dt
    return ii, jj, q


def march(
    system: RetardedSystem,
    T: float,
    dt: float | None = None,
    interp: str = "cubic",
    tol: float = 1e-10,
    max_iter: int = 200,
    force: bool = False,
) -> SystemSolution:
    """March the system on ``t_n = n * dt`` for ``n = 0..ceil(T/dt)``."""
    check_order(interp)
    if not T > 0:
        raise ValueError("T must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if system.margin >= 1.0:
        if not force:
            raise SolvabilityError(
                f"solvability margin {system.margin:.4g} >= 1; rerun with force to march anyway"
            )
        warnings.warn(f"marching with solvability margin {system.margin:.4g} >= 1", RuntimeWarning)
    dt = default_dt(system, T) if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = int(math.ceil(T / dt - 1e-9))
    M = system.M

    ii, jj, q = _split_pairs(system, dt)
    implicit = np.asarray(q < 1.0 - 1e-9)
    w = system.weights[ii, jj]
    expl = DelayedSum(q[~implicit], jj[~implicit], w[~implicit], ii[~implicit], M, interp)
    impl = DelayedSum(q[implicit], jj[implicit], w[implicit], ii[implicit], M, interp)
    has_implicit = bool(implicit.any())

    times = dt * np.arange(n_steps + 1)
    forcing = system.forcing(times)
    hist = np.zeros((n_steps + 1, M))
    iters = np.zeros(n_steps + 1, dtype=np.int64)
    worst = 0.0
    for n in range(n_steps + 1):
        rhs = forcing[:, n] - expl(hist, n)
        hist[n] = rhs
        if not has_implicit:
            continue
        for k in range(1, max_iter + 1):
            new = rhs - impl(hist, n)
            change = np.abs(new - hist[n])
            hist[n] = new
            if change.max() <= tol:
                break
        else:
            bad = int(np.argmax(change))
            raise ConvergenceError(
                f"Jacobi iteration did not converge at step {n} (t={times[n]:.6g}) in {max_iter} sweeps; "
                f"worst equation {bad}, change {change.max():.3g}, margin {system.margin:.4g}"
            )
        iters[n] = k
        worst = max(worst, float(change.max()))
    return SystemSolution(dt, hist.T.copy(), iters, worst, interp, system.margin >= 1.0)


def residual(system: RetardedSystem, solution: SystemSolution) -> float:
    """Max over holes and grid times of the defect in the defining equations.

    Delayed values are re-interpolated from the solution samples with the
    causal record convention, independently of the marching code path.
    """
    alpha = solution.samples
    n_t = alpha.shape[1]
    steps = np.arange(n_t)
    f = system.forcing(solution.times)
    worst = 0.0
    for i in range(system.M):
        acc = alpha[i] - f[i]
        for j in range(system.M):
            if j == i:
                continue
            pos = steps - system.delays[i, j] / solution.dt
            start, wts = stencil(pos, causal_record(pos), solution.interp)
            vals = np.zeros(n_t)
            for k in range(wts.shape[-1]):
                vals += wts[:, k] * alpha[j, np.minimum(start + k, n_t - 1)]
            acc = acc + system.weights[i, j] * vals
        worst = max(worst, float(np.max(np.abs(acc))))
    return worst


@dataclass(frozen=True)
class StabilityReport:
    worst_ratio: float
    worst_time: float
    margin: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0


def stability_check(system: RetardedSystem, solution: SystemSolution) -> StabilityReport:
    """Check ``|alpha(t)|_2 <= (1 - margin)^-1 * sqrt(sum_i |f_i|_{H1}^2)`` at every grid time.

    The H1 norms are trapezoidal integrals of ``f**2 + f'**2`` over the
    solution window. ``worst_ratio`` is the largest left/right quotient.
    """
    t = solution.times
    f = system.forcing(t)
    fp = system.forcing_derivative(t)
    h1_sq = np.trapezoid(f**2 + fp**2, t, axis=1)
    gap = 1.0 - system.margin
    bound = math.sqrt(float(h1_sq.sum())) / gap if gap > 0 else math.inf
    lhs = np.sqrt(np.sum(solution.samples**2, axis=0))
    if bound == 0.0:
        ratio = np.where(lhs > 0, np.inf, 0.0)
    else:
        ratio = lhs / bound
    k = int(np.argmax(ratio))
    return StabilityReport(float(ratio[k]), float(t[k]), system.margin, bound)
