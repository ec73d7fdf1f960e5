"""Laguerre-Gaussian modes with radial index p = 0 sampled on square grids.

All fields live in the beam-waist plane (no propagation, zero Gouy phase). The mode
convention is

    u_l(r, theta) = sqrt(2 / (pi |l|!)) / w * (r sqrt(2) / w)^|l| * exp(-r^2 / w^2) * exp(i l theta)

which is real and positive along theta = 0.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import gammaincinv, gammaln

from vortex_thermal.errors import (
    DimensionError,
    GridResolutionError,
    GridTruncationError,
    ParameterError,
)

logger = logging.getLogger(__name__)

MIN_SAMPLES = 64

# Smallest fraction of a mode's power the window may keep.
TRUNCATION_LIMIT = 0.999

# A waist must span at least this many cells.
MIN_CELLS_PER_WAIST = 2.0

# Power of LG_L_max a default window may leave outside its inscribed disc.
DEFAULT_WINDOW_TAIL = 1e-4

# Each 512 x 512 basis at L_max = 20 holds about 170 MB.
BASIS_CACHE_SIZE = 2


def minimum_extent_factor(L_max: int) -> float:
    """Window side, in waists, whose inscribed disc holds all but DEFAULT_WINDOW_TAIL of LG_L_max.

    Under |LG_l|^2 the variable 2 r^2 / w^2 is Gamma(|l| + 1) distributed.
    """
    if L_max < 0:
        raise ParameterError(f"L_max must be >= 0, got {L_max}")
    return float(np.sqrt(2.0 * gammaincinv(L_max + 1, 1.0 - DEFAULT_WINDOW_TAIL)))


@dataclass(frozen=True)
class GridSpec:
    """Square sampling window centred on the optical axis.

    Cell centres sit at (i - N/2) * dx, so the optical axis is a sample point.
    """

    samples_per_axis: int
    physical_extent: float

    def __post_init__(self):
        if int(self.samples_per_axis) != self.samples_per_axis or self.samples_per_axis < MIN_SAMPLES:
            raise ParameterError(f"samples_per_axis must be an integer >= {MIN_SAMPLES}, "
                                 f"got {self.samples_per_axis}")
        if not np.isfinite(self.physical_extent) or self.physical_extent <= 0:
            raise ParameterError(f"physical_extent must be positive, got {self.physical_extent}")

    @classmethod
    def for_waist(cls, waist: float, samples_per_axis: int = 512, extent_factor: float = 8.0,
                  L_max: Optional[int] = None) -> 'GridSpec':
        """Default window: extent_factor times the largest waist in play, widened when
        LG_L_max would not fit (see minimum_extent_factor)."""
        if L_max is not None:
            extent_factor = max(extent_factor, minimum_extent_factor(L_max))
        return cls(samples_per_axis, extent_factor * waist)

    @property
    def cell_size(self) -> float:
        return self.physical_extent / self.samples_per_axis

    @property
    def cell_area(self) -> float:
        return self.cell_size ** 2

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.samples_per_axis, self.samples_per_axis)

    def axis(self) -> np.ndarray:
        n = self.samples_per_axis
        return (np.arange(n) - n // 2) * self.cell_size

    def polar(self) -> Tuple[np.ndarray, np.ndarray]:
        """Radius and azimuth of every cell centre (read-only arrays)."""
        return _polar_coordinates(self)

    def refined(self, factor: int = 2) -> 'GridSpec':
        return GridSpec(self.samples_per_axis * factor, self.physical_extent)


@lru_cache(maxsize=8)
def _polar_coordinates(grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    x = grid.axis()
    X, Y = np.meshgrid(x, x, indexing='xy')
    r = np.hypot(X, Y)
    theta = np.arctan2(Y, X)
    r.setflags(write=False)
    theta.setflags(write=False)
    return r, theta


@dataclass(frozen=True)
class LgIndex:
    """Azimuthal index of an LG mode; the radial index is always 0."""

    ell: int
    L_max: int = 20

    def __post_init__(self):
        if abs(self.ell) > self.L_max:
            raise ParameterError(f"|ell|={abs(self.ell)} exceeds L_max={self.L_max}")

    @property
    def p(self) -> int:
        return 0


@dataclass(frozen=True)
class TransverseField:
    """Complex field sampled on a GridSpec."""

    amplitudes: np.ndarray
    grid: GridSpec
    waist: float = float('nan')

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex)
        if amplitudes.shape != self.grid.shape:
            raise DimensionError(f"field shape {amplitudes.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(amplitudes)):
            raise ParameterError("field values must be finite")
        amplitudes.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amplitudes)

    def norm(self) -> float:
        """Grid power sum |u|^2 * cell_area."""
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.cell_area)

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_table(self) -> pd.DataFrame:
        """Plain (row, col, re, im) table for inspection."""
        rows, cols = np.indices(self.grid.shape)
        return pd.DataFrame({
            'row': rows.ravel(),
            'col': cols.ravel(),
            're': self.amplitudes.real.ravel(),
            'im': self.amplitudes.imag.ravel(),
        })


def _lg_profile(ell: int, waist: float, grid: GridSpec) -> np.ndarray:
    r, theta = grid.polar()
    m = abs(ell)
    rho = r * np.sqrt(2.0) / waist
    log_norm = 0.5 * (np.log(2.0 / np.pi) - gammaln(m + 1)) - np.log(waist)
    radial = np.exp(log_norm) * np.power(rho, m) * np.exp(-(r / waist) ** 2)
    return radial * np.exp(1j * ell * theta)


def _check_waist(waist: float, grid: GridSpec):
    if not np.isfinite(waist) or waist <= 0:
        raise ParameterError(f"waist must be positive, got {waist}")
    if waist < MIN_CELLS_PER_WAIST * grid.cell_size:
        raise GridResolutionError(f"waist {waist:.3g} m spans fewer than {MIN_CELLS_PER_WAIST} cells "
                                  f"of size {grid.cell_size:.3g} m")


def evaluate_lg(index, waist: float, grid: GridSpec) -> TransverseField:
    """Unit-normalized LG_{l,0} field on the grid.

    Args:
        index: an LgIndex or a plain signed integer l.
        waist: beam waist w in meters.
        grid: sampling window.

    Raises:
        GridTruncationError: the window keeps less than 99.9 % of the mode power.
    """
    ell = index.ell if isinstance(index, LgIndex) else int(index)
    _check_waist(waist, grid)
    field = _lg_profile(ell, waist, grid)
    captured = float(np.sum(np.abs(field) ** 2) * grid.cell_area)
    if captured < TRUNCATION_LIMIT:
        raise GridTruncationError(f"LG_{ell} with waist {waist:.3g} m keeps only {captured:.5f} of its "
                                  f"power in a {grid.physical_extent:.3g} m window")
    logger.debug(f"LG_{ell} grid norm before renormalization: {captured:.9f}")
    return TransverseField(field / np.sqrt(captured), grid, waist)


@lru_cache(maxsize=BASIS_CACHE_SIZE)
def lg_basis(waist: float, L_max: int, grid: GridSpec) -> np.ndarray:
    """Stack of LG_l fields for l = -L_max..L_max, shape (2 L_max + 1, N*N), read-only."""
    basis = np.stack([evaluate_lg(ell, waist, grid).amplitudes.ravel()
                      for ell in range(-L_max, L_max + 1)])
    basis.setflags(write=False)
    return basis


def _check_same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise DimensionError(f"grids differ: {a} vs {b}")


def overlap(a: TransverseField, b: TransverseField) -> complex:
    """Discrete inner product <a, b> = sum conj(a) * b * cell_area."""
    _check_same_grid(a.grid, b.grid)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.cell_area)


def apply_phase(field: TransverseField, phase: np.ndarray) -> TransverseField:
    """Pointwise multiplication by exp(i * phase)."""
    phase = np.asarray(phase, dtype=float)
    if phase.shape != field.grid.shape:
        raise DimensionError(f"phase shape {phase.shape} does not match grid {field.grid.shape}")
    return TransverseField(field.amplitudes * np.exp(1j * phase), field.grid, field.waist)


def spiral_phase(ell: int, grid: GridSpec) -> np.ndarray:
    """Fork-free spiral phase ell * theta; adding it shifts OAM by +ell."""
    _, theta = grid.polar()
    return ell * theta


def azimuthal_decompose(field: TransverseField, waist: float, L_max: int) -> np.ndarray:
    """Coefficients <LG_l(waist), field> for l = -L_max..L_max (index l + L_max)."""
    basis = lg_basis(waist, L_max, field.grid)
    return basis.conj() @ field.amplitudes.ravel() * field.grid.cell_area
