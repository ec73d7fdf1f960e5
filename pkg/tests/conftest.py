import os
import sys

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from vortex_thermal.lg_modes import GridSpec

WAIST = 1e-3


@pytest.fixture
def waist():
    return WAIST


@pytest.fixture
def grid():
    """128 x 128 window of 8 waists (16 cells per waist)."""
    return GridSpec(128, 8 * WAIST)


@pytest.fixture
def wide_grid():
    """256 x 256 window of 12 waists, room for |l| up to 20."""
    return GridSpec(256, 12 * WAIST)


@pytest.fixture
def turbulence_grid():
    """128 x 128 window of 10 waists used by the screen and crosstalk tests."""
    return GridSpec(128, 10 * WAIST)
