"""Kolmogorov phase screens, OAM crosstalk matrices and turbulence channels for OAM spectra.

Screens are synthesised in the spectral domain: complex white noise is filtered by the
square root of the Kolmogorov phase spectrum 0.023 r0^(-5/3) f^(-11/3) (f in cycles per
meter), transformed to the spatial domain and one real quadrature is kept. Frequency cells
next to f = 0 carry the cell average of the spectrum rather than its centre value, and
subharmonic levels (on by default) fill the cells below the grid spacing down to
3^-SUBHARMONIC_LEVELS of it.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd

from vortex_thermal.analysis import OamSpectrum, ell_axis
from vortex_thermal.detection import CoherentState
from vortex_thermal.errors import DimensionError, ParameterError
from vortex_thermal.lg_modes import GridSpec, lg_basis

logger = logging.getLogger(__name__)

KOLMOGOROV_PSD_CONSTANT = 0.023
STRUCTURE_FUNCTION_CONSTANT = 6.88

# s = D / r0 with D = 2 * beam waist; 0.5 is the weak-turbulence default.
WEAK_STRENGTH = 0.5

SUBHARMONIC_LEVELS = 10

# FFT cells with |i|, |j| <= LOW_ORDER_CELLS get cell-averaged weights
LOW_ORDER_CELLS = 3
CELL_AVERAGE_SAMPLES = 16


@dataclass(frozen=True)
class TurbulenceParams:
    """Strength, sampling and seed of one phase-screen realization.

    Args:
        grid: sampling window of the screen.
        beam_waist: waist w of the modes crossing the screen; sets D = 2 w.
        strength: scintillation strength s = D / r0 (0 means no turbulence).
        seed: random seed of this realization.
        subharmonics: add subharmonic levels below the grid frequency spacing.
    """

    grid: GridSpec
    beam_waist: float
    strength: float = WEAK_STRENGTH
    seed: int = 0
    subharmonics: bool = True

    def __post_init__(self):
        if not np.isfinite(self.strength) or self.strength < 0:
            raise ParameterError(f"strength must be >= 0, got {self.strength}")
        if not self.beam_waist > 0:
            raise ParameterError(f"beam waist must be positive, got {self.beam_waist}")

    @classmethod
    def from_fried_parameter(cls, grid: GridSpec, beam_waist: float, fried_parameter: float,
                             seed: int = 0, subharmonics: bool = True) -> 'TurbulenceParams':
        if not fried_parameter > 0:
            raise ParameterError(f"Fried parameter must be positive, got {fried_parameter}")
        return cls(grid, beam_waist, 2.0 * beam_waist / fried_parameter, seed, subharmonics)

    @property
    def fried_parameter(self) -> float:
        if self.strength == 0:
            return float('inf')
        return 2.0 * self.beam_waist / self.strength

    def with_seed(self, seed: int) -> 'TurbulenceParams':
        return replace(self, seed=seed)


@dataclass(frozen=True)
class PhaseScreen:
    """Phase in radians per grid cell."""

    phase: np.ndarray
    params: TurbulenceParams

    def __post_init__(self):
        phase = np.array(self.phase, dtype=float)
        if phase.shape != self.params.grid.shape:
            raise DimensionError(f"screen shape {phase.shape} does not match grid {self.params.grid.shape}")
        if not np.all(np.isfinite(phase)):
            raise ParameterError("phase screen values must be finite")
        phase.setflags(write=False)
        object.__setattr__(self, 'phase', phase)

    @property
    def grid(self) -> GridSpec:
        return self.params.grid

    def to_table(self) -> pd.DataFrame:
        rows, cols = np.indices(self.phase.shape)
        return pd.DataFrame({'row': rows.ravel(), 'col': cols.ravel(), 'phase': self.phase.ravel()})


@dataclass(frozen=True)
class CrosstalkMatrix:
    """Mode coupling c[l', l] = <LG_l', screen * LG_l>; row/column index is l + L_max."""

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 != 1:
            raise DimensionError(f"crosstalk matrix must be square with odd size, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, 'c', c)

    @classmethod
    def identity(cls, L_max: int) -> 'CrosstalkMatrix':
        return cls(np.eye(2 * L_max + 1))

    @property
    def L_max(self) -> int:
        return (self.c.shape[0] - 1) // 2

    def column_norms(self) -> np.ndarray:
        return np.sum(np.abs(self.c) ** 2, axis=0)

    def deficit(self) -> np.ndarray:
        """Power each input mode loses outside the truncated p = 0 basis."""
        return 1.0 - self.column_norms()

    def to_table(self) -> pd.DataFrame:
        ell = ell_axis(self.L_max)
        out_ell, in_ell = np.meshgrid(ell, ell, indexing='ij')
        return pd.DataFrame({
            'ell_out': out_ell.ravel(),
            'ell_in': in_ell.ravel(),
            're': self.c.real.ravel(),
            'im': self.c.imag.ravel(),
        })


def _frequency_grid(n: int, spacing: float):
    f = np.fft.fftfreq(n, spacing)
    FX, FY = np.meshgrid(f, f, indexing='xy')
    return FX, FY


def _kolmogorov_psd(f: np.ndarray, r0: float) -> np.ndarray:
    psd = np.zeros_like(f)
    nonzero = f > 0
    psd[nonzero] = KOLMOGOROV_PSD_CONSTANT * r0 ** (-5.0 / 3.0) * f[nonzero] ** (-11.0 / 3.0)
    return psd


@lru_cache(maxsize=1)
def _cell_average_factors() -> np.ndarray:
    """Mean of |f|^2 PSD over the unit frequency cell centred on (i, j), over its centre value.

    Indexed [j + K, i + K] for |i|, |j| <= K = LOW_ORDER_CELLS. The ratio is scale free, so one
    table serves the FFT cells next to f = 0 and the 3 x 3 ring of every subharmonic level.
    """
    K = LOW_ORDER_CELLS
    offsets = (np.arange(CELL_AVERAGE_SAMPLES) + 0.5) / CELL_AVERAGE_SAMPLES - 0.5
    du, dv = np.meshgrid(offsets, offsets, indexing='xy')
    factors = np.ones((2 * K + 1, 2 * K + 1))
    for j in range(-K, K + 1):
        for i in range(-K, K + 1):
            if i == 0 and j == 0:
                continue
            radius = np.hypot(i + du, j + dv)
            factors[j + K, i + K] = np.mean(radius ** (-5.0 / 3.0)) / np.hypot(i, j) ** (-5.0 / 3.0)
    factors.setflags(write=False)
    return factors


def _subharmonic_phase(grid: GridSpec, r0: float, rng: np.random.Generator) -> np.ndarray:
    x = grid.axis()
    factors = _cell_average_factors()
    K = LOW_ORDER_CELLS
    low = np.zeros(grid.shape, dtype=complex)
    for level in range(1, SUBHARMONIC_LEVELS + 1):
        df = 1.0 / (3 ** level * grid.physical_extent)
        for j in (-1, 0, 1):
            for i in (-1, 0, 1):
                if i == 0 and j == 0:
                    continue
                psd = KOLMOGOROV_PSD_CONSTANT * r0 ** (-5.0 / 3.0) * (np.hypot(i, j) * df) ** (-11.0 / 3.0)
                psd *= factors[j + K, i + K]
                coefficient = (rng.standard_normal() + 1j * rng.standard_normal()) * np.sqrt(psd) * df
                # rows follow y, columns follow x
                low += coefficient * np.outer(np.exp(2j * np.pi * j * df * x), np.exp(2j * np.pi * i * df * x))
    low = low.real
    return low - low.mean()


def generate_phase_screen(params: TurbulenceParams) -> PhaseScreen:
    """One Kolmogorov phase screen, deterministic in params.seed."""
    grid = params.grid
    if params.strength == 0:
        return PhaseScreen(np.zeros(grid.shape), params)
    r0 = params.fried_parameter
    if not params.subharmonics and grid.physical_extent < 2.0 * r0:
        logger.warning(f"window {grid.physical_extent:.3g} m spans less than 2 r0 = {2 * r0:.3g} m "
                       f"and subharmonics are off; large-scale phase is underrepresented")
    rng = np.random.default_rng(params.seed)
    n = grid.samples_per_axis
    df = 1.0 / grid.physical_extent
    FX, FY = _frequency_grid(n, grid.cell_size)
    # piston bin f = 0 stays zero
    psd = _kolmogorov_psd(np.hypot(FX, FY), r0)
    near = np.arange(-LOW_ORDER_CELLS, LOW_ORDER_CELLS + 1) % n
    psd[np.ix_(near, near)] *= _cell_average_factors()
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    spectrum = noise * np.sqrt(psd) * df
    phase = np.fft.ifft2(spectrum).real * n * n
    if params.subharmonics:
        phase = phase + _subharmonic_phase(grid, r0, rng)
    logger.debug(f"screen seed={params.seed} s={params.strength:.3g}: phase rms {phase.std():.3g} rad")
    return PhaseScreen(phase, params)


def kolmogorov_structure_function(r, r0: float):
    """D(r) = 6.88 (r / r0)^(5/3)."""
    return STRUCTURE_FUNCTION_CONSTANT * (np.asarray(r, dtype=float) / r0) ** (5.0 / 3.0)


def phase_structure_function(screens: Iterable[PhaseScreen], separations: Iterable[int]) -> np.ndarray:
    """Ensemble average of [phi(x + r) - phi(x)]^2 along both grid axes, r in cells."""
    separations = [int(s) for s in separations]
    totals = np.zeros(len(separations))
    count = 0
    for screen in screens:
        phi = screen.phase
        for i, s in enumerate(separations):
            dx = phi[:, s:] - phi[:, :-s]
            dy = phi[s:, :] - phi[:-s, :]
            totals[i] += 0.5 * (np.mean(dx ** 2) + np.mean(dy ** 2))
        count += 1
    if count == 0:
        raise ParameterError("need at least one screen")
    return totals / count


def crosstalk_matrix(screen: PhaseScreen, waist: float, L_max: int) -> CrosstalkMatrix:
    """c[l', l] = overlap(LG_l', apply_phase(LG_l, screen)) for l, l' in [-L_max, L_max]."""
    grid = screen.grid
    basis = lg_basis(waist, L_max, grid)
    screened = basis * np.exp(1j * screen.phase.ravel())[None, :]
    c = (basis.conj() @ screened.T) * grid.cell_area
    matrix = CrosstalkMatrix(c)
    logger.debug(f"crosstalk seed={screen.params.seed}: worst column deficit {matrix.deficit().max():.3g}")
    return matrix


def _check_window(L_state: int, matrix: CrosstalkMatrix):
    if L_state != matrix.L_max:
        raise DimensionError(f"state has L_max={L_state} but the crosstalk matrix has L_max={matrix.L_max}")


def propagate_incoherent(p: OamSpectrum, matrix: CrosstalkMatrix) -> OamSpectrum:
    """p'(l') = sum_l |c[l', l]|^2 p(l), renormalized over the window."""
    _check_window(p.L_max, matrix)
    return OamSpectrum.normalized(np.abs(matrix.c) ** 2 @ p.p)


def propagate_coherent(state: CoherentState, matrix: CrosstalkMatrix) -> OamSpectrum:
    """p'(l') = |sum_l c[l', l] a_l|^2, renormalized over the window."""
    _check_window(state.L_max, matrix)
    return OamSpectrum.normalized(np.abs(matrix.c @ state.a) ** 2)


def screen_crosstalk(params: TurbulenceParams, L_max: int) -> CrosstalkMatrix:
    return crosstalk_matrix(generate_phase_screen(params), params.beam_waist, L_max)


def ensemble_average(state: Union[CoherentState, OamSpectrum], params: TurbulenceParams, n_masks: int,
                     max_workers: Optional[int] = 1) -> OamSpectrum:
    """Sum of output spectra over n_masks screens with seeds params.seed + index, renormalized.

    Coherent states are propagated coherently, spectra incoherently. Masks may run on a
    thread pool; the sum is always taken in mask order.
    """
    if n_masks < 1:
        raise ParameterError(f"n_masks must be >= 1, got {n_masks}")
    coherent = isinstance(state, CoherentState)
    propagate = propagate_coherent if coherent else propagate_incoherent

    def one_mask(index: int) -> np.ndarray:
        logger.info(f"turbulence mask {index + 1}/{n_masks} (seed {params.seed + index})")
        matrix = screen_crosstalk(params.with_seed(params.seed + index), state.L_max)
        return propagate(state, matrix).p

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outputs = list(pool.map(one_mask, range(n_masks)))
    else:
        outputs = [one_mask(index) for index in range(n_masks)]

    total = np.zeros_like(outputs[0])
    for output in outputs:
        total = total + output
    return OamSpectrum.normalized(total)
