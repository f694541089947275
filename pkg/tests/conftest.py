import math

import numpy as np
import pytest

from holescatter.cluster import Cluster, Hole, SourceConfig
from holescatter.signal import SmoothBump

FOUR_PI = 4.0 * math.pi


@pytest.fixture
def bump():
    return SmoothBump()


@pytest.fixture
def source(bump):
    """Point source of the single-hole benchmark geometry."""
    return SourceConfig((0.15, 0.0, 0.0), bump)


def sphere_hole(center, radius):
    return Hole.sphere(center, radius, FOUR_PI * radius)


def random_cluster(rng, m, radius=0.01, spread=0.4, min_gap=0.1):
    """Spheres at random positions at least ``min_gap`` apart, inside a cube of side ``spread``."""
    centers = []
    while len(centers) < m:
        c = rng.uniform(-spread / 2, spread / 2, 3)
        if all(np.linalg.norm(c - o) >= min_gap for o in centers):
            centers.append(c)
    return Cluster(tuple(sphere_hole(c, radius) for c in centers))
