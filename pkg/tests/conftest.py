from __future__ import annotations

import functools

import numpy as np
import pytest

from dimercyl.kasteleyn import assemble, invert
from dimercyl.lattice import build_staircase_cylinder, build_straight_cylinder
from dimercyl.sampling import enumerate_covers

# width 12 staircase with steps on both boundaries
FIG_BOTTOM = (-2, -2, -2, 0, 0, 2, 2, 2, 0, 0, 0, 0)
FIG_TOP = (6, 6, 8, 8, 8, 8, 8, 8, 8, 6, 6, 6)
# small staircase with a single bottom step
SKEW_BOTTOM = (0, 2, 2, 2)
SKEW_TOP = (4, 4, 4, 4)
# a 28-vertex shape without reflection symmetry, so its third moment is non-zero
ASYM_BOTTOM = (0, 0, 0, 0, 0, 2)
ASYM_TOP = (4, 4, 6, 6, 6, 4)


@functools.lru_cache(maxsize=None)
def straight(width: int, height: int, cut: int = 0):
    d = build_straight_cylinder(width, height, cut)
    system = assemble(d)
    return d, system, invert(system)


@functools.lru_cache(maxsize=None)
def staircase(bottom: tuple, top: tuple, cut: int = 0):
    d = build_staircase_cylinder(len(bottom), bottom, top, cut)
    system = assemble(d)
    return d, system, invert(system)


@functools.lru_cache(maxsize=None)
def covers_of(domain):
    return enumerate_covers(domain, max_vertices=28)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
