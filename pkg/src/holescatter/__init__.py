"""Time-domain scattering by clusters of small sound-soft holes.

The point-source model replaces each hole by its capacitance and couples the
holes through a retarded Foldy-Lax system. Companion modules supply panel
capacitances, an exact single-sphere reference, an effective-medium volume
solver and a density-to-perforation design chain.
"""

__version__ = "0.1.0"

from .capacitance import SurfaceMesh, fill_capacitances, icosphere, solve_equilibrium_density  # noqa: E402
from .cluster import Cluster, Hole, SourceConfig, periodic_layout, separations  # noqa: E402
from .retarded import assemble, march, residual, stability_check  # noqa: E402
from .signal import SmoothBump, Trace, make_signal, sample  # noqa: E402

__all__ = [
    "Cluster",
    "Hole",
    "SmoothBump",
    "SourceConfig",
    "SurfaceMesh",
    "Trace",
    "assemble",
    "fill_capacitances",
    "icosphere",
    "make_signal",
    "march",
    "periodic_layout",
    "residual",
    "sample",
    "separations",
    "solve_equilibrium_density",
    "stability_check",
]
