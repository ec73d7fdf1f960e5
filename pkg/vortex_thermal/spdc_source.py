"""Biphoton OAM source: joint amplitudes C_|l| of sum_l C_|l| |+l, -l> and the heralded reduced state."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp

from vortex_thermal.analysis import OamSpectrum, ell_axis, fit_thermal
from vortex_thermal.errors import GridResolutionError, ParameterError
from vortex_thermal.lg_modes import GridSpec, TransverseField, evaluate_lg

logger = logging.getLogger(__name__)

# Default truncation; keeps the tail beyond |l| = 20 below 1e-3 for alpha >= 0.25.
DEFAULT_L_MAX = 20

NORMALIZATION_TOLERANCE = 1e-9
MONOTONE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class JointAmplitudes:
    """Real nonnegative Schmidt amplitudes c_|l| for |l| = 0..L_max."""

    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ParameterError(f"need amplitudes for at least |l| = 0, 1, got shape {c.shape}")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ParameterError("joint amplitudes must be finite and nonnegative")
        norm = c[0] ** 2 + 2.0 * np.sum(c[1:] ** 2)
        if abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
            raise ParameterError(f"joint amplitudes are not normalized (c0^2 + 2 sum c^2 = {norm:.12g})")
        if np.any(np.diff(c) > MONOTONE_TOLERANCE):
            raise ParameterError("joint amplitudes must be non-increasing in |l|")
        c.setflags(write=False)
        object.__setattr__(self, 'c', c)

    @classmethod
    def normalized(cls, weights) -> 'JointAmplitudes':
        weights = np.asarray(weights, dtype=float)
        norm = weights[0] ** 2 + 2.0 * np.sum(weights[1:] ** 2)
        return cls(weights / np.sqrt(norm))

    @property
    def L_max(self) -> int:
        return self.c.size - 1

    def amplitude(self, ell: int) -> float:
        return float(self.c[abs(ell)]) if abs(ell) <= self.L_max else 0.0

    def decay_residual(self) -> float:
        """RMS residual of a straight-line fit of log c_|l| against |l|.

        Zero for an exactly exponential (thermal) decay.
        """
        support = self.c > 0
        levels = np.arange(self.c.size)[support]
        if levels.size < 3:
            return 0.0
        log_c = np.log(self.c[support])
        slope, intercept = np.polyfit(levels, log_c, 1)
        return float(np.sqrt(np.mean((log_c - (slope * levels + intercept)) ** 2)))

    def to_table(self) -> pd.DataFrame:
        return pd.DataFrame({'ell': np.arange(self.c.size), 'amplitude': self.c})


class SourceParams(BaseModel):
    """Either a direct thermal parameter or a pump/collection waist pair."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    alpha: Optional[float] = Field(default=None, gt=0)
    pump_waist: Optional[float] = Field(default=None, gt=0)
    collection_waist: Optional[float] = Field(default=None, gt=0)
    L_max: int = Field(default=DEFAULT_L_MAX, ge=8)

    @model_validator(mode='after')
    def _one_construction(self):
        waists = (self.pump_waist, self.collection_waist)
        if self.alpha is not None and any(w is not None for w in waists):
            raise ValueError("give either alpha or pump/collection waists, not both")
        if self.alpha is None and any(w is None for w in waists):
            raise ValueError("give alpha, or both pump_waist and collection_waist")
        return self

    @property
    def is_thermal(self) -> bool:
        return self.alpha is not None


def joint_amplitudes_thermal(alpha: float, L_max: int = DEFAULT_L_MAX) -> JointAmplitudes:
    """c_|l| = sqrt(e^-a(|l|+1) / Z) with Z the degenerate sum truncated at L_max."""
    if not np.isfinite(alpha) or alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if L_max < 1:
        raise ParameterError(f"L_max must be >= 1, got {L_max}")
    levels = np.arange(L_max + 1)
    log_weights = -alpha * (levels + 1)
    log_z = logsumexp(np.concatenate([log_weights, log_weights[1:]]))
    return JointAmplitudes(np.exp(0.5 * (log_weights - log_z)))


def pump_profile(waist: float, grid: GridSpec) -> TransverseField:
    """Gaussian pump exp(-r^2 / w_p^2); may be wider than the window (no truncation check)."""
    if waist <= 0:
        raise ParameterError(f"pump waist must be positive, got {waist}")
    if waist < 2.0 * grid.cell_size:
        raise GridResolutionError(f"pump waist {waist:.3g} m is not resolved by cells of {grid.cell_size:.3g} m")
    r, _ = grid.polar()
    return TransverseField(np.exp(-(r / waist) ** 2), grid, waist)


def joint_amplitudes_overlap(pump_waist: float, collection_waist: float, L_max: int,
                             grid: GridSpec) -> JointAmplitudes:
    """Thin-crystal collinear overlap C_l ~ |int E_p conj(u_l) conj(u_-l) d^2r| with a Gaussian pump."""
    pump = pump_profile(pump_waist, grid).amplitudes
    weights = np.empty(L_max + 1)
    for ell in range(L_max + 1):
        u_plus = evaluate_lg(ell, collection_waist, grid).amplitudes
        u_minus = evaluate_lg(-ell, collection_waist, grid).amplitudes
        weights[ell] = abs(np.sum(pump * np.conj(u_plus) * np.conj(u_minus)) * grid.cell_area)
    # quadrature noise far down the tail must not break monotonicity
    weights = np.minimum.accumulate(weights)
    amplitudes = JointAmplitudes.normalized(weights)
    logger.debug(f"overlap source w_p={pump_waist:.3g} w_c={collection_waist:.3g}: "
                 f"log-linear residual {amplitudes.decay_residual():.3g}")
    return amplitudes


def analytic_overlap_alpha(pump_waist: float, collection_waist: float) -> float:
    """Closed-form thermal parameter of the overlap model, 2 ln(1 + w_c^2 / (2 w_p^2))."""
    return float(2.0 * np.log1p(collection_waist ** 2 / (2.0 * pump_waist ** 2)))


def build_source(params: SourceParams, grid: Optional[GridSpec] = None) -> JointAmplitudes:
    if params.is_thermal:
        return joint_amplitudes_thermal(params.alpha, params.L_max)
    if grid is None:
        grid = GridSpec.for_waist(params.collection_waist, L_max=params.L_max)
    return joint_amplitudes_overlap(params.pump_waist, params.collection_waist, params.L_max, grid)


def reduced_spectrum(j: JointAmplitudes) -> OamSpectrum:
    """Signal populations after tracing out the idler: p(l) = c_|l|^2."""
    p = j.c[np.abs(ell_axis(j.L_max))] ** 2
    return OamSpectrum(p / p.sum())


def source_alpha(j: JointAmplitudes, window: Optional[int] = None) -> float:
    """Thermal parameter fitted to the reduced spectrum of a source."""
    return fit_thermal(reduced_spectrum(j), window=window).alpha
