"""Hole geometry, cluster diagnostics and lattice layouts."""

from __future__ import annotations

import configparser
import io
import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import capacitance as cap_mod

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def bounding_radius(self) -> float:
        return self.radius


@dataclass(frozen=True)
class MeshShape:
    """Reference surface ``B`` (a :class:`~holescatter.capacitance.SurfaceMesh`) dilated by ``scale``."""

    mesh: object
    scale: float
    path: Optional[str] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"mesh scale must be positive, got {self.scale}")

    @property
    def diameter(self) -> float:
        return self.scale * self.mesh.diameter

    @property
    def bounding_radius(self) -> float:
        return self.scale * float(np.max(np.linalg.norm(self.mesh.vertices, axis=1)))


@dataclass(frozen=True)
class Hole:
    center: tuple
    shape: Union[Sphere, MeshShape]
    capacitance: Optional[float] = None

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 3:
            raise ValueError("hole center must be a 3-vector")
        object.__setattr__(self, "center", c)
        if self.capacitance is not None and not self.capacitance > 0:
            raise ValueError("capacitance must be positive once computed")

    @classmethod
    def sphere(cls, center, radius, capacitance=None) -> "Hole":
        return cls(center, Sphere(float(radius)), capacitance)


@dataclass(frozen=True)
class Layout:
    """Provenance of a lattice-generated cluster."""

    box: tuple
    cell_volume: float
    cells: tuple
    cbar: Union[float, str]


@dataclass(frozen=True)
class Cluster:
    holes: tuple = ()
    layout: Optional[Layout] = None

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        if len(self.holes) > 1:
            _, _, dij = _separations(self.holes)
            off = ~np.eye(len(self.holes), dtype=bool)
            if np.any(dij[off] <= 0):
                i, j = np.argwhere((dij <= 0) & off)[0]
                raise ValueError(f"holes {i} and {j} overlap (surface distance {dij[i, j]:.6g})")

    def __len__(self):
        return len(self.holes)

    @property
    def centers(self) -> np.ndarray:
        return np.array([h.center for h in self.holes], dtype=float).reshape(-1, 3)

    @property
    def capacitances(self) -> np.ndarray:
        caps = [h.capacitance for h in self.holes]
        if any(c is None for c in caps):
            raise ValueError("capacitances have not been computed for every hole")
        return np.array(caps, dtype=float)

    @property
    def has_capacitances(self) -> bool:
        return all(h.capacitance is not None for h in self.holes)

    def center_distances(self) -> np.ndarray:
        z = self.centers
        return np.linalg.norm(z[:, None, :] - z[None, :, :], axis=-1)

    def with_capacitances(self, caps) -> "Cluster":
        caps = list(caps)
        if len(caps) != len(self.holes):
            raise ValueError("one capacitance per hole required")
        return replace(self, holes=tuple(replace(h, capacitance=float(c)) for h, c in zip(self.holes, caps)))

    def translated(self, shift) -> "Cluster":
        shift = np.asarray(shift, dtype=float)
        return replace(
            self, holes=tuple(replace(h, center=tuple(np.asarray(h.center) + shift)) for h in self.holes), layout=None
        )

    def rotated(self, rot) -> "Cluster":
        rot = np.asarray(rot, dtype=float)
        return replace(
            self, holes=tuple(replace(h, center=tuple(rot @ np.asarray(h.center))) for h in self.holes), layout=None
        )


@dataclass(frozen=True)
class SourceConfig:
    position: tuple
    signal: object
    c0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if not self.c0 > 0:
            raise ValueError("wave speed c0 must be positive")

    def check_outside(self, cluster: Cluster) -> None:
        if len(cluster) == 0:
            return
        z = np.asarray(self.position)
        dist = np.linalg.norm(cluster.centers - z, axis=1)
        rad = np.array([h.shape.bounding_radius for h in cluster.holes])
        if np.any(dist <= rad):
            j = int(np.argmin(dist - rad))
            raise ValueError(f"source lies inside hole {j}")

    def scaled(self, factor: float) -> "SourceConfig":
        return replace(self, signal=self.signal.scaled(factor))


def _separations(holes):
    z = np.array([h.center for h in holes], dtype=float)
    dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=-1)
    rad = np.array([h.shape.bounding_radius for h in holes])
    dij = dist - rad[:, None] - rad[None, :]
    diam = np.array([h.shape.diameter for h in holes])
    return diam, dist, dij


def separations(cluster: Cluster):
    """Return ``(a, d, d_ij)``: largest diameter, smallest surface gap, gap matrix.

    For spheres ``d_ij = |z_i - z_j| - r_i - r_j``. Mesh holes use their
    bounding sphere about the centre, which underestimates the true gap.
    The diagonal of ``d_ij`` and ``d`` for a single hole are ``inf``.
    """
    if len(cluster) == 0:
        raise ValueError("cluster has no holes")
    diam, _, dij = _separations(cluster.holes)
    np.fill_diagonal(dij, np.inf)
    off = dij[np.isfinite(dij)]
    if np.any(off <= 0):
        raise ValueError("overlapping holes")
    d = float(dij.min())
    return float(diam.max()), d, dij


def check_expansion_condition(cluster: Cluster) -> float:
    """``a * max_i sum_{j!=i} d_ij**-2``; the expansion is justified when < 1."""
    if len(cluster) <= 1:
        return 0.0
    a, _, dij = separations(cluster)
    return float(a * np.max(np.sum(dij**-2.0, axis=1)))


def check_solvability_condition(cluster: Cluster) -> float:
    """``max_j C_j * max_i sum_{j!=i} 1 / (4 pi |z_i - z_j|)``; solvable when < 1."""
    caps = cluster.capacitances
    if len(cluster) <= 1:
        return 0.0
    dist = cluster.center_distances()
    np.fill_diagonal(dist, np.inf)
    return float(caps.max() * np.max(np.sum(1.0 / (FOUR_PI * dist), axis=1)))


def regime_exponents(cluster: Cluster) -> dict:
    """Empirical ``s`` and ``beta`` in ``M ~ a**-s``, ``d ~ a**beta``.

    Also reports the exponents of the three error terms of the cluster
    expansion: ``2-s``, ``3-2s`` and ``3-2beta-s``.
    """
    M = len(cluster)
    if M < 2:
        raise ValueError("regime exponents need at least two holes")
    a, d, _ = separations(cluster)
    if not 0 < a < 1:
        raise ValueError(f"regime exponents need 0 < a < 1, got a={a}")
    log_inv = math.log(1.0 / a)
    s = math.log(M) / log_inv
    beta = math.log(1.0 / d) / log_inv
    return {
        "s": s,
        "beta": beta,
        "error_exponents": (2.0 - s, 3.0 - 2.0 * s, 3.0 - 2.0 * beta - s),
    }


def periodic_layout(
    box,
    a: Optional[float] = None,
    cbar: Union[float, Callable] = FOUR_PI,
    cells_per_side: Optional[int] = None,
) -> Cluster:
    """Cubic-lattice cluster with one sphere per cell of volume ``a``.

    ``box`` is ``(xmin, xmax, ymin, ymax, zmin, zmax)``. The lattice has
    ``floor(L_k / a**(1/3))`` cells along each axis, centred in the box, so
    a box of volume 1 gets ``[1/a]`` cells when that is a cube number.
    Instead of ``a`` one may give ``cells_per_side`` for a cubic box, which
    sets ``a = |box| / cells_per_side**3``.

    Each sphere has radius ``cbar(z_j) * a / (4 pi)`` so that its
    capacitance is ``cbar(z_j) * a``.
    """
    lo = np.asarray(box[0::2], dtype=float)
    hi = np.asarray(box[1::2], dtype=float)
    L = hi - lo
    if np.any(L <= 0):
        raise ValueError("box must have positive extent")
    if cells_per_side is not None:
        if not np.allclose(L, L[0], rtol=1e-12):
            raise ValueError("cells_per_side needs a cubic box")
        a = float(np.prod(L)) / cells_per_side**3
        counts = np.array([cells_per_side] * 3)
    else:
        if a is None or not a > 0:
            raise ValueError("cell volume a must be positive")
        side = a ** (1.0 / 3.0)
        counts = np.floor(L / side + 1e-9).astype(int)
    if np.any(counts < 1):
        raise ValueError(f"cell side {a ** (1 / 3):.4g} does not fit in the box")
    side = a ** (1.0 / 3.0)
    margin = (L - counts * side) / 2.0
    axes = [lo[k] + margin[k] + side * (np.arange(counts[k]) + 0.5) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    if callable(cbar):
        cvals = np.asarray(cbar(centers), dtype=float).reshape(-1)
        cdesc = "field"
    else:
        cvals = np.full(len(centers), float(cbar))
        cdesc = float(cbar)
    if np.any(cvals <= 0):
        raise ValueError("scaled capacitance must be positive on every cell")
    radii = cvals * a / FOUR_PI
    if np.any(radii >= side / 2.0):
        raise ValueError(
            f"hole radius {radii.max():.4g} reaches half the cell side {side / 2:.4g}; holes would collide"
        )
    holes = tuple(Hole.sphere(c, r, capacitance=FOUR_PI * r) for c, r in zip(centers, radii))
    layout = Layout(tuple(float(v) for v in box), float(a), tuple(int(c) for c in counts), cdesc)
    return Cluster(holes, layout)


# ---------------------------------------------------------------------------
# Structured-text I/O
# ---------------------------------------------------------------------------
def _vec(text: str):
    vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    return tuple(vals)


def _fmt(vals) -> str:
    return ", ".join(repr(float(v)) for v in vals)


def holes_from_config(cp: configparser.ConfigParser, base_dir: str = ".") -> list:
    """Read ``[hole.N]`` sections (``center``, ``shape``, ``radius`` or ``mesh``/``scale``)."""
    names = sorted((s for s in cp.sections() if s.startswith("hole.")), key=lambda s: int(s.split(".", 1)[1]))
    holes = []
    meshes = {}
    for name in names:
        sec = cp[name]
        shape = sec.get("shape", "sphere").strip()
        cap = sec.getfloat("capacitance", fallback=None)
        if shape == "sphere":
            holes.append(Hole(_vec(sec["center"]), Sphere(sec.getfloat("radius")), cap))
        elif shape == "mesh":
            path = sec["mesh"].strip()
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if full not in meshes:
                meshes[full] = cap_mod.load_mesh(full)
            holes.append(Hole(_vec(sec["center"]), MeshShape(meshes[full], sec.getfloat("scale"), path), cap))
        else:
            raise ValueError(f"[{name}]: unknown shape {shape!r}")
    return holes


def cluster_to_config(cluster: Cluster) -> str:
    """Serialize holes to the ``[hole.N]`` format read by :func:`load_cluster`."""
    cp = configparser.ConfigParser()
    for i, h in enumerate(cluster.holes):
        sec = {"center": _fmt(h.center)}
        if isinstance(h.shape, Sphere):
            sec["shape"] = "sphere"
            sec["radius"] = repr(float(h.shape.radius))
        else:
            sec["shape"] = "mesh"
            sec["mesh"] = h.shape.path or ""
            sec["scale"] = repr(float(h.shape.scale))
        if h.capacitance is not None:
            sec["capacitance"] = repr(float(h.capacitance))
        cp[f"hole.{i}"] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_cluster(path: str) -> Cluster:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    return Cluster(tuple(holes_from_config(cp, os.path.dirname(os.path.abspath(path)))))


def parse_cluster_text(text: str, base_dir: str = ".") -> Cluster:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    return Cluster(tuple(holes_from_config(cp, base_dir)))


__all__: Sequence[str] = [
    "Sphere",
    "MeshShape",
    "Hole",
    "Cluster",
    "Layout",
    "SourceConfig",
    "separations",
    "check_expansion_condition",
    "check_solvability_condition",
    "regime_exponents",
    "periodic_layout",
    "load_cluster",
    "cluster_to_config",
]
