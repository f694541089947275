"""Mass density <-> auxiliary potential <-> scaled capacitance <-> perforation.

The potential ``p`` solves ``-Lap p + cbar p = 0`` in the box with ``p = 1``
on (and outside) the boundary; the equivalent mass density is
``rho = p**-2``. Going backwards, a target ``rho`` with subharmonic
``p = rho**-1/2`` yields ``cbar = Lap p / p``, and drilling holes with
capacitance ``cbar(z_j) * a`` realizes it.

All fields live on the nodes of a uniform grid that includes the boundary
layer; Laplacians use the 7-point stencil.
"""

from __future__ import annotations

import configparser
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .cluster import Cluster, periodic_layout

logger = logging.getLogger(__name__)

SOLVE_RTOL = 1e-12
ROUNDOFF_FLOOR = -1e-12


class SubharmonicityError(ValueError):
    pass


class StagnationError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class DensityField:
    """Node values on ``box`` with spacing ``h`` (boundary nodes included)."""

    box: tuple
    h: float
    values: np.ndarray = field(repr=False)
    kind: str = "p"
    adjustment: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != node_shape(self.box, self.h):
            raise ValueError(f"values shape {vals.shape} does not match grid {node_shape(self.box, self.h)}")
        object.__setattr__(self, "values", vals)

    @property
    def axes(self):
        return node_axes(self.box, self.h)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1, 1:-1]

    def with_values(self, values, kind=None, adjustment=0.0) -> "DensityField":
        return DensityField(self.box, self.h, values, kind or self.kind, adjustment)


def node_shape(box, h) -> tuple:
    L = np.asarray(box[1::2], dtype=float) - np.asarray(box[0::2], dtype=float)
    n = np.rint(L / h).astype(int)
    if np.any(n < 2) or not np.allclose(n * h, L, rtol=1e-9, atol=0):
        raise ValueError(f"spacing {h} does not tile the box with at least one interior node")
    return tuple(int(v) + 1 for v in n)


def node_axes(box, h):
    shape = node_shape(box, h)
    return [box[2 * k] + h * np.arange(shape[k]) for k in range(3)]


def node_points(box, h) -> np.ndarray:
    g = np.meshgrid(*node_axes(box, h), indexing="ij")
    return np.stack(g, axis=-1)


def from_function(box, h, fn, kind="p") -> DensityField:
    pts = node_points(box, h)
    vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=float).reshape(pts.shape[:3])
    return DensityField(box, h, vals, kind)


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """7-point Laplacian at interior nodes."""
    v = values
    c = v[1:-1, 1:-1, 1:-1]
    return (
        v[2:, 1:-1, 1:-1] + v[:-2, 1:-1, 1:-1]
        + v[1:-1, 2:, 1:-1] + v[1:-1, :-2, 1:-1]
        + v[1:-1, 1:-1, 2:] + v[1:-1, 1:-1, :-2]
        - 6.0 * c
    ) / h**2  # fmt: skip


def p_from_rho(rho: DensityField) -> DensityField:
    """``p = rho**-1/2`` with boundary nodes forced to 1."""
    if np.any(rho.values <= 0):
        raise ValueError("mass density must be positive")
    p = rho.values**-0.5
    mask = np.ones(p.shape, dtype=bool)
    mask[1:-1, 1:-1, 1:-1] = False
    adj = float(np.max(np.abs(p[mask] - 1.0)))
    p[mask] = 1.0
    if adj > 0:
        logger.info("forced p = 1 on the boundary (max adjustment %.3g)", adj)
    return rho.with_values(p, "p", adj)


def rho_from_p(p: DensityField) -> DensityField:
    if np.any(p.values <= 0):
        raise ValueError("p must be positive")
    return p.with_values(p.values**-2.0, "rho")


def cbar_from_p(p: DensityField, allow_roundoff: bool = False) -> DensityField:
    """``cbar = Lap p / p`` at interior nodes (NaN on the boundary layer).

    Raises :class:`SubharmonicityError` where ``Lap p <= 0``; with
    ``allow_roundoff`` values down to ``-1e-12`` are accepted.
    """
    if np.any(p.values <= 0):
        raise ValueError("p must be positive")
    lap = laplacian(p.values, p.h)
    floor = ROUNDOFF_FLOOR if allow_roundoff else 0.0
    bad = lap < floor if allow_roundoff else lap <= floor
    if np.any(bad):
        k = np.unravel_index(np.argmin(lap), lap.shape)
        node = tuple(int(i) + 1 for i in k)
        xyz = tuple(float(ax[i]) for ax, i in zip(p.axes, node))
        raise SubharmonicityError(f"Lap p = {lap[k]:.4g} <= 0 at node {node} {xyz}; p is not subharmonic there")
    out = np.full(p.values.shape, np.nan)
    out[1:-1, 1:-1, 1:-1] = lap / p.interior
    return p.with_values(out, "cbar")


def _cbar_interior(cbar, box, h) -> np.ndarray:
    shape = node_shape(box, h)
    inner = tuple(s - 2 for s in shape)
    if isinstance(cbar, DensityField):
        vals = cbar.interior
    elif callable(cbar):
        pts = node_points(box, h)[1:-1, 1:-1, 1:-1]
        vals = np.asarray(cbar(pts.reshape(-1, 3)), dtype=float).reshape(inner)
    elif np.ndim(cbar) == 0:
        vals = np.full(inner, float(cbar))
    else:
        vals = np.asarray(cbar, dtype=float)
        if vals.shape == shape:
            vals = vals[1:-1, 1:-1, 1:-1]
        if vals.shape != inner:
            raise ValueError("cbar array does not match the grid")
    return np.ascontiguousarray(vals)


def _operator(inner, h, cb):
    def lap1(n):
        return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])

    I = [sp.identity(n) for n in inner]
    L = (
        sp.kron(sp.kron(lap1(inner[0]), I[1]), I[2])
        + sp.kron(sp.kron(I[0], lap1(inner[1])), I[2])
        + sp.kron(sp.kron(I[0], I[1]), lap1(inner[2]))
    )
    return (L / h**2 + sp.diags(cb.ravel())).tocsr()


def solve_p(cbar, box, h, rtol: float = SOLVE_RTOL, maxiter: int | None = None) -> DensityField:
    """Solve ``-Lap p + cbar p = 0``, ``p = 1`` on the boundary, by conjugate gradients."""
    cb = _cbar_interior(cbar, box, h)
    if np.any(cb < 0):
        raise ValueError("cbar must be non-negative")
    shape = node_shape(box, h)
    inner = cb.shape
    A = _operator(inner, h, cb)
    b = np.zeros(inner)
    b[0] += 1.0
    b[-1] += 1.0
    b[:, 0] += 1.0
    b[:, -1] += 1.0
    b[:, :, 0] += 1.0
    b[:, :, -1] += 1.0
    b = b.ravel() / h**2
    history = []
    bnorm = float(np.linalg.norm(b))

    def track(xk):
        history.append(float(np.linalg.norm(b - A @ xk)) / bnorm)

    maxiter = maxiter or 10 * int(sum(inner)) + 100
    x, info = spla.cg(A, b, x0=np.ones(b.size), rtol=rtol, atol=0.0, maxiter=maxiter, callback=track)
    final = float(np.linalg.norm(b - A @ x)) / bnorm
    if info != 0 or final > max(10 * rtol, 1e-10):
        raise StagnationError(f"p solve stalled at relative residual {final:.3g} (info={info})", history)
    p = np.ones(shape)
    p[1:-1, 1:-1, 1:-1] = x.reshape(inner)
    if np.any(p <= 0) or np.any(p > 1.0 + 1e-12):
        raise RuntimeError("discrete maximum principle violated; check cbar")
    return DensityField(box, h, np.minimum(p, 1.0), "p")


def cbar_interpolator(cbar: DensityField):
    """Trilinear interpolant of a ``cbar`` field; the boundary layer copies its inner neighbours."""
    v = cbar.values.copy()
    inner = v[1:-1, 1:-1, 1:-1]
    v = np.pad(inner, 1, mode="edge")
    return RegularGridInterpolator(cbar.axes, v, method="linear")


def layout_from_cbar(cbar, a: float, box=None) -> Cluster:
    """Perforation with hole radii ``cbar(z_j) * a / (4 pi)`` on the cell lattice of volume ``a``."""
    if isinstance(cbar, DensityField):
        return periodic_layout(cbar.box, a, cbar_interpolator(cbar))
    if box is None:
        raise ValueError("box required for a constant or callable cbar")
    return periodic_layout(box, a, cbar)


def roundtrip_error(cbar_const: float, box, h) -> float:
    """Max interior ``|cbar_from_p(solve_p(cbar)) - cbar|`` on one grid."""
    p = solve_p(cbar_const, box, h)
    rec = cbar_from_p(p, allow_roundoff=cbar_const == 0)
    return float(np.max(np.abs(rec.interior - cbar_const)))


def restrict(fine: DensityField, h: float) -> DensityField:
    """Inject a fine-grid field onto the coarser grid with spacing ``h``."""
    ratio = h / fine.h
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise ValueError("coarse spacing must be an integer multiple of the fine spacing")
    return DensityField(fine.box, h, fine.values[::k, ::k, ::k], fine.kind)


def cross_grid_errors(cbar: float, box, h: float, levels: int, central_fraction: float = 0.5):
    """Recover ``cbar`` from a fine reference ``p`` restricted to ``h, h/2, ...``.

    The reference is solved at ``h / 2**levels``. Errors are measured on the
    central ``central_fraction`` of each axis, away from the box edges where
    ``p`` is not smooth.
    """
    fine_h = h / 2**levels
    ref = solve_p(cbar, box, fine_h)
    hs, errs = [], []
    lo = np.asarray(box[0::2], dtype=float)
    hi = np.asarray(box[1::2], dtype=float)
    mid = (lo + hi) / 2
    half = central_fraction * (hi - lo) / 2
    for k in range(levels):
        hk = h / 2**k
        rec = cbar_from_p(restrict(ref, hk))
        axes = rec.axes
        sel = [np.nonzero(np.abs(ax - mid[i]) <= half[i] + 1e-12)[0] for i, ax in enumerate(axes)]
        block = rec.values[np.ix_(*sel)]
        errs.append(float(np.nanmax(np.abs(block - cbar))))
        hs.append(hk)
    return errs, hs


# ---------------------------------------------------------------------------
# Column files
# ---------------------------------------------------------------------------
def field_to_csv(f: DensityField) -> str:
    lines = ["i,j,k,value"]
    for idx in np.ndindex(f.values.shape):
        v = f.values[idx]
        lines.append(f"{idx[0]},{idx[1]},{idx[2]}," + ("" if np.isnan(v) else repr(float(v))))
    return "\n".join(lines) + "\n"


def field_manifest(f: DensityField) -> str:
    cp = configparser.ConfigParser()
    cp["field"] = {
        "kind": f.kind,
        "box": ", ".join(repr(float(v)) for v in f.box),
        "h": repr(float(f.h)),
        "shape": ", ".join(str(s) for s in f.values.shape),
        "boundary_adjustment": repr(float(f.adjustment)),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def field_from_files(csv_text: str, manifest_text: str) -> DensityField:
    cp = configparser.ConfigParser()
    cp.read_string(manifest_text)
    sec = cp["field"]
    box = tuple(float(v) for v in sec["box"].split(","))
    h = float(sec["h"])
    vals = np.full(node_shape(box, h), np.nan)
    for line in csv_text.splitlines()[1:]:
        if not line.strip():
            continue
        i, j, k, v = line.split(",")
        vals[int(i), int(j), int(k)] = float(v) if v.strip() else math.nan
    return DensityField(box, h, vals, sec.get("kind", "p"))
