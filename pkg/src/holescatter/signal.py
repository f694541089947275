"""Causal signals, sampled traces and retarded (delayed) lookups.

Everything downstream marches on a uniform time grid and reads delayed
values ``x(t - tau)`` between grid nodes. The interpolation rule used for
those reads lives here so that the marching solvers, the residual checks
and the field evaluators all agree on it.

Interpolation convention
------------------------
A lookup at fractional grid position ``pos`` (``(t - t0) / dt``) is

* exactly zero for ``pos < 0`` (causal extension),
* the stored sample when ``pos`` is a node (to within ``NODE_SNAP``),
* a linear or 4-point Lagrange cubic combination of neighbouring nodes
  otherwise. The cubic stencil is centred (``floor(pos)-1 .. floor(pos)+2``)
  and shifts to one side when it would leave the available record.

The *available record* is normally the whole trace. Marching code passes a
shorter record (only the nodes already computed), which is what makes a
step explicit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NODE_SNAP = 1e-9
# exp(-x) underflows to 0.0 for x above ~745
_EXP_CUTOFF = 745.0

INTERP_ORDERS = ("linear", "cubic")


# ---------------------------------------------------------------------------
# Signals
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SmoothBump:
    """``amplitude * exp(-(scale / (t - shift))**2)`` for ``t > shift``, else 0.

    With the defaults this is the canonical test signal ``exp(-1/t**2)``.
    A positive ``shift`` gives the delayed variant.
    """

    scale: float = 1.0
    shift: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def kind(self) -> str:
        return "smooth-bump" if self.shift == 0.0 else "delayed-smooth-bump"

    def params(self) -> dict:
        return {"scale": self.scale, "shift": self.shift, "amplitude": self.amplitude}

    def scaled(self, factor: float) -> "SmoothBump":
        return SmoothBump(self.scale, self.shift, self.amplitude * factor)

    def _parts(self, t):
        s = np.asarray(t, dtype=float) - self.shift
        pos = s > 0
        safe = np.where(pos, s, 1.0)
        with np.errstate(over="ignore"):
            x = (self.scale / safe) ** 2
        live = pos & (x < _EXP_CUTOFF)
        e = np.where(live, np.exp(-np.where(live, x, 0.0)), 0.0)
        return safe, live, e

    def __call__(self, t):
        _, live, e = self._parts(t)
        out = self.amplitude * e
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t, order: int = 1):
        if order not in (1, 2):
            raise ValueError(f"unsupported derivative order {order}; use 1 or 2")
        s, live, e = self._parts(t)
        c2 = self.scale**2
        if order == 1:
            poly = 2.0 * c2 / s**3
        else:
            poly = -6.0 * c2 / s**4 + 4.0 * c2 * c2 / s**6
        out = self.amplitude * np.where(live, poly * e, 0.0)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SampledSignal:
    """User-supplied waveform given as a trace (``kind = user-sampled``).

    Values before the first sample are zero. Causality (zero for t <= 0) is
    checked on construction; summability of derivative maxima is assumed,
    not verified.
    """

    trace: "Trace"
    order: str = "cubic"

    def __post_init__(self):
        t = self.trace.times
        if np.any(self.trace.samples[t <= 0.0] != 0.0):
            raise ValueError("user-sampled signal must vanish for t <= 0")

    kind = "user-sampled"

    def params(self) -> dict:
        return {"t0": self.trace.t0, "dt": self.trace.dt, "n": len(self.trace)}

    def scaled(self, factor: float) -> "SampledSignal":
        return SampledSignal(Trace(self.trace.t0, self.trace.dt, self.trace.samples * factor), self.order)

    def __call__(self, t):
        return self.trace.interp(t, self.order)

    def derivative(self, t, order: int = 1):
        if order not in (1, 2):
            raise ValueError(f"unsupported derivative order {order}; use 1 or 2")
        d = self.trace.samples
        for _ in range(order):
            d = np.gradient(d, self.trace.dt, edge_order=2)
        return Trace(self.trace.t0, self.trace.dt, d).interp(t, self.order)


def evaluate(signal, t):
    """Value of ``signal`` at time(s) ``t``."""
    return signal(t)


def derivative(signal, t, order: int = 1):
    """``order``-th time derivative (1 or 2) of ``signal`` at ``t``."""
    return signal.derivative(t, order)


def make_signal(kind: str, **params):
    """Build a signal from its configuration name and parameters."""
    if kind in ("smooth-bump", "delayed-smooth-bump"):
        return SmoothBump(**{k: float(v) for k, v in params.items()})
    if kind == "user-sampled":
        return SampledSignal(params["trace"], params.get("order", "cubic"))
    raise ValueError(f"unknown signal kind {kind!r}")


# ---------------------------------------------------------------------------
# Interpolation stencils
# ---------------------------------------------------------------------------
def _snap(pos):
    near = np.rint(pos)
    return np.where(np.abs(pos - near) <= NODE_SNAP, near, pos)


def stencil(pos, n_avail, order: str = "cubic"):
    """Interpolation stencil for fractional grid positions.

    Parameters
    ----------
    pos : array_like
        Lookup positions in grid units.
    n_avail : int or array_like
        Number of usable nodes (``0 .. n_avail-1``), broadcast against ``pos``.
    order : {"linear", "cubic"}

    Returns
    -------
    start : ndarray of int
        First node of each stencil.
    weights : ndarray, shape ``pos.shape + (width,)``
        Node weights; all zero where ``pos < 0``.

    Raises
    ------
    ValueError
        If any position lies beyond the last available node.
    """
    if order not in INTERP_ORDERS:
        raise ValueError(f"interp order must be one of {INTERP_ORDERS}, got {order!r}")
    pos = _snap(np.asarray(pos, dtype=float))
    n_avail = np.broadcast_to(np.asarray(n_avail, dtype=np.int64), pos.shape)
    if np.any(n_avail < 1):
        raise ValueError("empty record")
    over = pos > n_avail - 1
    if np.any(over):
        worst = float(np.max(pos - (n_avail - 1)))
        raise ValueError(f"lookup beyond recorded window by {worst:.6g} steps (no extrapolation)")
    zero = pos < 0
    pos = np.where(zero, 0.0, pos)

    width = 4 if order == "cubic" else 2
    # short records fall back to the widest stencil that fits
    w_eff = np.minimum(width, n_avail)
    lead = 1 if width == 4 else 0
    start = np.floor(pos).astype(np.int64) - np.where(w_eff == 4, lead, 0)
    start = np.clip(start, 0, np.maximum(n_avail - w_eff, 0))
    s = pos - start

    weights = np.zeros(pos.shape + (width,))
    if width == 4:
        cub = w_eff == 4
        weights[..., 0] = np.where(cub, -(s - 1) * (s - 2) * (s - 3) / 6.0, 0.0)
        weights[..., 1] = np.where(cub, s * (s - 2) * (s - 3) / 2.0, 0.0)
        weights[..., 2] = np.where(cub, -s * (s - 1) * (s - 3) / 2.0, 0.0)
        weights[..., 3] = np.where(cub, s * (s - 1) * (s - 2) / 6.0, 0.0)
        rest = ~cub
    else:
        rest = np.ones(pos.shape, dtype=bool)
    lin = rest & (w_eff >= 2)
    weights[..., 0] = np.where(lin, 1.0 - s, weights[..., 0])
    weights[..., 1] = np.where(lin, s, weights[..., 1])
    one = rest & (w_eff == 1)
    weights[..., 0] = np.where(one, 1.0, weights[..., 0])
    weights[zero] = 0.0
    return start, weights


def causal_record(pos):
    """Nodes available to a causal lookup at ``pos``: those up to ``ceil(pos)``.

    A lookup that lands at or before node ``n-1`` never touches node ``n``.
    """
    pos = _snap(np.asarray(pos, dtype=float))
    return np.maximum(np.ceil(pos).astype(np.int64), 0) + 1


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Trace:
    """Uniformly sampled causal time trace."""

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)

    def interp(self, t, order: str = "cubic"):
        """Value at ``t``; zero before ``t0``, error past the last sample."""
        pos = (np.asarray(t, dtype=float) - self.t0) / self.dt
        start, w = stencil(pos, len(self.samples), order)
        idx = start[..., None] + np.arange(w.shape[-1])
        idx = np.minimum(idx, len(self.samples) - 1)
        out = np.sum(w * self.samples[idx], axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def to_csv(self, name: str = "value") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", name])
        for t, v in zip(self.times, self.samples):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        t = np.array([float(r[0]) for r in rows])
        v = np.array([float(r[1]) for r in rows])
        if len(t) < 2:
            raise ValueError("trace needs at least two samples")
        dt = (t[-1] - t[0]) / (len(t) - 1)
        if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
            raise ValueError("trace times are not uniformly spaced")
        return cls(float(t[0]), float(dt), v)


def sample(signal, t0: float, dt: float, n: int) -> Trace:
    """Sample ``signal`` at ``t0 + k*dt`` for ``k = 0..n-1``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n < 2:
        raise ValueError("need at least two samples")
    t = t0 + dt * np.arange(n)
    return Trace(t0, dt, np.asarray(signal(t), dtype=float))


def interp(trace: Trace, t, order: str = "cubic"):
    return trace.interp(t, order)


# ---------------------------------------------------------------------------
# Delayed sums for marching
# ---------------------------------------------------------------------------
class DelayedSum:
    """Repeated evaluation of ``sum_e coef[e] * x[src[e]](t_n - delay[e])``.

    ``history`` is a ``(n_steps, n_sources)`` array filled row by row. The
    record available to entry ``e`` at step ``n`` is the causal one (nodes up
    to ``ceil(n - delay/dt)``), so entries with ``delay >= dt`` only read
    completed rows. Once ``n`` is past the longest delay the stencils stop
    depending on ``n`` and are cached as flat offsets.

    Entries are grouped by ``target`` and reduced with ``np.add.reduceat``;
    ``target`` must therefore be sorted.
    """

    def __init__(self, delay_steps, src, coef, target, n_targets: int, order: str = "cubic"):
        self.q = _snap(np.asarray(delay_steps, dtype=float))
        if np.any(self.q < 0):
            raise ValueError("negative delay")
        self.src = np.asarray(src, dtype=np.int64)
        self.coef = np.asarray(coef, dtype=float)
        target = np.asarray(target, dtype=np.int64)
        if np.any(np.diff(target) < 0):
            raise ValueError("target must be sorted")
        self.order = order
        self.n_targets = n_targets
        self._target = target
        present, first = np.unique(target, return_index=True)
        self._present = present
        self._first = first
        self.implicit = self.q < 1.0
        self._steady_from = int(math.ceil(float(self.q.max()))) + 5 if len(self.q) else 0
        self._cache = None

    def _reduce(self, vals):
        out = np.zeros(self.n_targets)
        if len(vals):
            out[self._present] = np.add.reduceat(vals, self._first)
        return out

    def _general(self, history, n):
        pos = n - self.q
        avail = causal_record(pos)
        start, w = stencil(pos, avail, self.order)
        n_src = history.shape[1]
        flat = history.reshape(-1)
        vals = np.zeros(len(self.q))
        for k in range(w.shape[-1]):
            row = np.minimum(start + k, n)
            vals += w[..., k] * flat[row * n_src + self.src]
        return vals

    def _steady(self, history, n):
        n_src = history.shape[1]
        if self._cache is None:
            pos = n - self.q
            start, w = stencil(pos, causal_record(pos), self.order)
            lin = (start - n) * n_src + self.src
            self._cache = (lin, [self.coef * w[:, k] for k in range(w.shape[-1])])
        lin, cw = self._cache
        flat = history.reshape(-1)
        idx = lin + n * n_src
        vals = cw[0] * flat.take(idx)
        for k in range(1, len(cw)):
            idx += n_src
            vals += cw[k] * flat.take(idx)
        return vals

    def __call__(self, history: np.ndarray, n: int) -> np.ndarray:
        """Per-target sums at step ``n``; ``history[n]`` holds the current iterate."""
        if len(self.q) == 0:
            return np.zeros(self.n_targets)
        if n >= self._steady_from:
            return self._reduce(self._steady(history, n))
        return self._reduce(self.coef * self._general(history, n))


def lookup_many(samples: np.ndarray, dt: float, t, order: str = "cubic") -> np.ndarray:
    """Interpolate rows of ``samples`` (shape ``(n_traces, n_t)``) at times ``t``.

    ``t`` broadcasts to ``(n_traces, ...)``; all traces start at 0.
    """
    samples = np.asarray(samples, dtype=float)
    t = np.asarray(t, dtype=float)
    pos = t / dt
    start, w = stencil(pos, samples.shape[1], order)
    rows = np.arange(samples.shape[0]).reshape((-1,) + (1,) * (pos.ndim - 1))
    rows = np.broadcast_to(rows, pos.shape)
    out = np.zeros(pos.shape)
    for k in range(w.shape[-1]):
        col = np.minimum(start + k, samples.shape[1] - 1)
        out += w[..., k] * samples[rows, col]
    return out


def times_grid(T: float, dt: float) -> np.ndarray:
    n = int(round(T / dt))
    return dt * np.arange(n + 1)


def check_order(order: str) -> str:
    if order not in INTERP_ORDERS:
        raise ValueError(f"interp order must be one of {INTERP_ORDERS}, got {order!r}")
    return order


__all__: Sequence[str] = [
    "SmoothBump",
    "SampledSignal",
    "Trace",
    "DelayedSum",
    "evaluate",
    "derivative",
    "sample",
    "interp",
    "stencil",
    "causal_record",
    "lookup_many",
    "make_signal",
]
