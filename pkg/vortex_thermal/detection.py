"""Measurement chain: SLM shift masks, fibre projection, bucket and iris idler detectors, photon counting."""

import logging
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammainc

from vortex_thermal.analysis import OamSpectrum, ell_axis, thermal_pdf
from vortex_thermal.errors import (
    DimensionError,
    GridResolutionError,
    ModeRangeError,
    ParameterError,
)
from vortex_thermal.lg_modes import GridSpec, evaluate_lg
from vortex_thermal.spdc_source import JointAmplitudes, reduced_spectrum

logger = logging.getLogger(__name__)

# Idler beam waist at the iris plane (meters); only diameter/waist ratios matter.
DEFAULT_IDLER_WAIST = 0.5e-3

MIN_CELLS_ACROSS_APERTURE = 8


@dataclass(frozen=True)
class MaskOp:
    """Superposition of OAM shifts: L = sum_m c_m L_{+m} as (shift, weight) terms."""

    terms: Tuple[Tuple[int, complex], ...]

    def __post_init__(self):
        terms = tuple((int(shift), complex(weight)) for shift, weight in self.terms)
        if not terms:
            raise ParameterError("a mask needs at least one term")
        shifts = [shift for shift, _ in terms]
        if len(set(shifts)) != len(shifts):
            raise ParameterError(f"mask shifts must be distinct, got {shifts}")
        object.__setattr__(self, 'terms', terms)

    @classmethod
    def shift(cls, m: int) -> 'MaskOp':
        """Single raising (m > 0) or lowering (m < 0) operation."""
        return cls(((m, 1.0),))

    def weight(self, shift: int) -> complex:
        return dict(self.terms).get(shift, 0.0j)

    @property
    def max_shift(self) -> int:
        return max(abs(shift) for shift, _ in self.terms)


@dataclass(frozen=True)
class DetectorConfig:
    """Idler detector: bucket, iris of a given diameter, or mask + single-mode fibre."""

    kind: Literal['bucket', 'aperture', 'fiber_projection'] = 'bucket'
    diameter: Optional[float] = None
    mask: Optional[MaskOp] = None
    waist: Optional[float] = None

    def __post_init__(self):
        if self.kind == 'aperture' and (self.diameter is None or not self.diameter > 0):
            raise ParameterError(f"aperture diameter must be positive, got {self.diameter}")
        if self.kind == 'fiber_projection' and self.mask is None:
            raise ParameterError("fiber projection needs a mask")

    @classmethod
    def bucket(cls) -> 'DetectorConfig':
        return cls('bucket')

    @classmethod
    def aperture(cls, diameter: float) -> 'DetectorConfig':
        return cls('aperture', diameter=diameter)

    @classmethod
    def fiber_projection(cls, mask: MaskOp, waist: Optional[float] = None) -> 'DetectorConfig':
        return cls('fiber_projection', mask=mask, waist=waist)


@dataclass(frozen=True)
class CoherentState:
    """Pure single-photon state with amplitude a_l for l in [-L_max, L_max]."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=complex)
        if a.ndim != 1 or a.size % 2 != 1:
            raise DimensionError(f"state needs an odd number of amplitudes, got shape {a.shape}")
        norm = float(np.sum(np.abs(a) ** 2))
        if abs(norm - 1.0) > 1e-9:
            raise ParameterError(f"state is not normalized (sum |a|^2 = {norm:.12g})")
        a.setflags(write=False)
        object.__setattr__(self, 'a', a)

    @classmethod
    def normalized(cls, amplitudes) -> 'CoherentState':
        amplitudes = np.asarray(amplitudes, dtype=complex)
        norm = np.sqrt(np.sum(np.abs(amplitudes) ** 2))
        if not norm > 0:
            raise ParameterError("cannot normalize a zero state")
        return cls(amplitudes / norm)

    @property
    def L_max(self) -> int:
        return (self.a.size - 1) // 2

    def populations(self) -> OamSpectrum:
        p = np.abs(self.a) ** 2
        return OamSpectrum(p / p.sum())

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.a, self.a.conj())

    def purity(self) -> float:
        rho = self.density_matrix()
        return float(np.trace(rho @ rho).real)


def mask_shift_detection(j: JointAmplitudes, m: int) -> float:
    """Heralded probability that the signal passes L_{+m} and couples to the l = 0 fibre.

    Detects signal photons in l = -m, i.e. returns c_|m|^2 over the joint normalization.
    """
    if abs(m) > j.L_max:
        raise ModeRangeError(f"|m|={abs(m)} exceeds L_max={j.L_max}")
    normalization = j.c[0] ** 2 + 2.0 * np.sum(j.c[1:] ** 2)
    return float(j.c[abs(m)] ** 2 / normalization)


def scan_masks(j: JointAmplitudes) -> OamSpectrum:
    """Scan L_{+m} over m = -L_max..L_max; bin l = -m gets the detection probability."""
    probabilities = np.array([mask_shift_detection(j, -ell) for ell in ell_axis(j.L_max)])
    return OamSpectrum.normalized(probabilities)


def mask_detection(j: JointAmplitudes, mask: MaskOp) -> float:
    """Detection probability of a superposition mask on the signal with a bucket idler."""
    if mask.max_shift > j.L_max:
        raise ModeRangeError(f"mask shift {mask.max_shift} exceeds L_max={j.L_max}")
    return float(sum(abs(weight) ** 2 * mask_shift_detection(j, shift) for shift, weight in mask.terms))


def thermal_mask(alpha: float, L_max: int, literal_weights: bool = False) -> MaskOp:
    """Superposition of raising and lowering operations with thermal weights.

    Shift +/-m gets weight sqrt(e^-a(|m|+1) / Z) so heralded populations are Gibbs
    populations; literal_weights=True uses e^-a(|m|+1) / Z instead.
    """
    populations = thermal_pdf(alpha, L_max).p
    weights = populations / np.sqrt(np.sum(populations ** 2)) if literal_weights else np.sqrt(populations)
    return MaskOp(tuple((int(ell), complex(w)) for ell, w in zip(ell_axis(L_max), weights)))


def coherent_thermal_state(alpha: float, L_max: int, phases: Optional[Sequence[float]] = None,
                           literal_weights: bool = False) -> CoherentState:
    """Pure state with Gibbs populations and (by default) zero relative phases.

    Args:
        alpha: inverse temperature parameter.
        L_max: truncation order.
        phases: optional phase per l (length 2 L_max + 1).
        literal_weights: use amplitudes proportional to e^-a(|l|+1) instead of their
            square roots; the populations then follow a thermal law at 2 * alpha.
    """
    populations = thermal_pdf(alpha, L_max).p
    amplitudes = populations if literal_weights else np.sqrt(populations)
    if phases is not None:
        phases = np.asarray(phases, dtype=float)
        if phases.shape != amplitudes.shape:
            raise DimensionError(f"need {amplitudes.size} phases, got {phases.size}")
        amplitudes = amplitudes * np.exp(1j * phases)
    return CoherentState.normalized(amplitudes)


def heralded_state(j: JointAmplitudes, mask: MaskOp) -> CoherentState:
    """Signal state heralded by an idler mask followed by single-mode fibre projection.

    The idler in -l reaches l = 0 through the shift m = l, so a_l ~ c_|l| * w_l.
    """
    if mask.max_shift > j.L_max:
        raise ModeRangeError(f"mask shift {mask.max_shift} exceeds L_max={j.L_max}")
    amplitudes = np.array([j.amplitude(ell) * mask.weight(int(ell)) for ell in ell_axis(j.L_max)])
    if not np.any(np.abs(amplitudes) > 0):
        raise ParameterError("mask never heralds a signal photon")
    return CoherentState.normalized(amplitudes)


def aperture_efficiency(ell: int, diameter: float, waist: float, grid: GridSpec) -> float:
    """Fraction of the LG_l intensity passing a centred iris of the given diameter.

    The iris edge is anti-aliased: a cell counts by how far its centre lies inside.
    """
    if not diameter > 0:
        raise ParameterError(f"aperture diameter must be positive, got {diameter}")
    if diameter < MIN_CELLS_ACROSS_APERTURE * grid.cell_size:
        raise GridResolutionError(f"aperture {diameter:.3g} m spans fewer than {MIN_CELLS_ACROSS_APERTURE} "
                                  f"cells of {grid.cell_size:.3g} m")
    intensity = evaluate_lg(ell, waist, grid).intensity()
    r, _ = grid.polar()
    coverage = np.clip((0.5 * diameter - r) / grid.cell_size + 0.5, 0.0, 1.0)
    eta = float(np.sum(intensity * coverage) * grid.cell_area)
    return min(max(eta, 0.0), 1.0)


def aperture_efficiency_closed_form(ell: int, diameter: float, waist: float) -> float:
    """Encircled power of LG_{l,0}: regularized lower incomplete gamma P(|l|+1, d^2 / (2 w^2))."""
    return float(gammainc(abs(ell) + 1, diameter ** 2 / (2.0 * waist ** 2)))


def aperture_efficiencies(L_max: int, diameter: float, waist: float, grid: GridSpec) -> np.ndarray:
    """eta(|l|) for |l| = 0..L_max."""
    return np.array([aperture_efficiency(ell, diameter, waist, grid) for ell in range(L_max + 1)])


def heralded_spectrum(j: JointAmplitudes, idler: DetectorConfig, waist: float = DEFAULT_IDLER_WAIST,
                      grid: Optional[GridSpec] = None) -> OamSpectrum:
    """Signal OAM spectrum conditioned on an idler click.

    Bucket idler: full trace, p(l) ~ c_|l|^2. Iris: partial trace, p(l) ~ c_|l|^2 eta(|l|, d).
    Mask + fibre: populations of the heralded pure state.
    """
    if idler.kind == 'bucket' or (idler.kind == 'aperture' and np.isinf(idler.diameter)):
        return reduced_spectrum(j)
    if idler.kind == 'fiber_projection':
        return heralded_state(j, idler.mask).populations()
    if grid is None:
        grid = GridSpec.for_waist(waist, L_max=j.L_max)
    eta = aperture_efficiencies(j.L_max, idler.diameter, waist, grid)
    logger.debug(f"iris d={idler.diameter:.3g} m: eta(0)={eta[0]:.4f}, eta({j.L_max})={eta[-1]:.3g}")
    weights = j.c[np.abs(ell_axis(j.L_max))] ** 2 * eta[np.abs(ell_axis(j.L_max))]
    if not weights.sum() > 0:
        raise ParameterError(f"no heralded signal passes an iris of {idler.diameter:.3g} m")
    return OamSpectrum.normalized(weights)


def sample_counts(p: OamSpectrum, expected_total: float, seed: int) -> np.ndarray:
    """Independent Poisson counts per bin with mean expected_total * p(l)."""
    if not expected_total > 0:
        raise ParameterError(f"expected_total must be positive, got {expected_total}")
    rng = np.random.default_rng(seed)
    return rng.poisson(expected_total * p.p).astype(np.int64)


def describe_detector(idler: DetectorConfig) -> Dict[str, str]:
    """Flat key/value description used in table headers."""
    description = {'detector': idler.kind}
    if idler.diameter is not None:
        description['diameter'] = f"{idler.diameter:.6g}"
    if idler.mask is not None:
        description['mask_terms'] = str(len(idler.mask.terms))
    return description
