"""Statistical layer: OAM spectra, the thermal model and its fit, energies and KL divergence.

Energies are dimensionless (units of hbar*omega) and k_B = 1, so the only thermal
parameter is alpha = beta*hbar*omega. A level with OAM index l has energy |l| + 1 and
every level except l = 0 is doubly degenerate.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, rel_entr

from vortex_thermal.errors import (
    DimensionError,
    EmptyCountsError,
    FitError,
    ParameterError,
    SupportError,
)

logger = logging.getLogger(__name__)

# Measured distributions are compared on |l| <= 10.
DEFAULT_WINDOW = 10

NORMALIZATION_TOLERANCE = 1e-9

ALPHA_BOUNDS = (1e-6, 50.0)

FIT_METHODS = ('auto', 'poisson-mle', 'least-squares', 'min-kl')


def ell_axis(L_max: int) -> np.ndarray:
    """Signed OAM indices -L_max..L_max."""
    return np.arange(-L_max, L_max + 1)


def _frozen(values: Optional[np.ndarray], dtype=float) -> Optional[np.ndarray]:
    if values is None:
        return None
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def _check_alpha(alpha: float):
    if not np.isfinite(alpha) or alpha <= 0:
        raise ParameterError(f"alpha must be a positive finite number, got {alpha}")


@dataclass(frozen=True)
class OamSpectrum:
    """Normalized probability per signed OAM index l in [-L_max, L_max].

    Args:
        p: probabilities, index i holds l = i - L_max.
        stderr: optional standard error per bin (same scale as p).
        counts: optional raw integer counts the spectrum was built from.
    """

    p: np.ndarray
    stderr: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None

    def __post_init__(self):
        p = _frozen(self.p)
        if p.ndim != 1 or p.size % 2 != 1:
            raise DimensionError(f"spectrum needs an odd number of bins, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ParameterError("spectrum probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > NORMALIZATION_TOLERANCE:
            raise ParameterError(f"spectrum is not normalized (sum = {p.sum():.12g})")
        object.__setattr__(self, 'p', p)
        for name, dtype in (('stderr', float), ('counts', np.int64)):
            values = _frozen(getattr(self, name), dtype)
            if values is not None and values.shape != p.shape:
                raise DimensionError(f"{name} shape {values.shape} does not match spectrum {p.shape}")
            object.__setattr__(self, name, values)

    @classmethod
    def normalized(cls, values, stderr=None) -> 'OamSpectrum':
        """Build a spectrum from nonnegative weights by dividing by their sum."""
        values = np.asarray(values, dtype=float)
        total = values.sum()
        if not total > 0:
            raise ParameterError("cannot normalize a spectrum with zero total weight")
        scaled_err = None if stderr is None else np.asarray(stderr, dtype=float) / total
        return cls(values / total, scaled_err)

    @classmethod
    def from_counts(cls, counts) -> 'OamSpectrum':
        """Spectrum of relative frequencies with Poisson errors attached."""
        counts = np.asarray(counts)
        if np.any(counts < 0):
            raise ParameterError("counts must be nonnegative")
        total = counts.sum()
        if total == 0:
            raise EmptyCountsError("all counts are zero")
        return cls(counts / total, poisson_errors(counts) / total, counts)

    @property
    def L_max(self) -> int:
        return (self.p.size - 1) // 2

    @property
    def ell(self) -> np.ndarray:
        return ell_axis(self.L_max)

    def probability(self, ell: int) -> float:
        if abs(ell) > self.L_max:
            return 0.0
        return float(self.p[ell + self.L_max])

    def window(self, W: int) -> 'OamSpectrum':
        """Restrict to |l| <= W and renormalize."""
        W = min(int(W), self.L_max)
        sl = slice(self.L_max - W, self.L_max + W + 1)
        kept = self.p[sl]
        total = kept.sum()
        if not total > 0:
            raise ParameterError(f"spectrum has no weight inside |l| <= {W}")
        stderr = None if self.stderr is None else self.stderr[sl] / total
        counts = None if self.counts is None else self.counts[sl]
        return OamSpectrum(kept / total, stderr, counts)

    def to_table(self) -> pd.DataFrame:
        table = pd.DataFrame({'ell': self.ell, 'probability': self.p})
        if self.stderr is not None:
            table['error'] = self.stderr
        if self.counts is not None:
            table['counts'] = self.counts
        return table


def poisson_errors(counts) -> np.ndarray:
    """Standard error sqrt(n) per bin; empty bins get unit error."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ParameterError("counts must be nonnegative")
    return np.sqrt(np.maximum(counts, 1.0))


def partition_function(alpha: float, L_max: Optional[int] = None) -> float:
    """Degenerate partition function Z = e^-a + 2 * sum_{l>=1} e^-a(l+1).

    With L_max=None the closed form e^-a (1 + e^-a) / (1 - e^-a) is returned,
    otherwise the sum is truncated at |l| = L_max.
    """
    _check_alpha(alpha)
    if L_max is None:
        return float(np.exp(-alpha) * (1.0 + np.exp(-alpha)) / -np.expm1(-alpha))
    levels = np.arange(1, int(L_max) + 1)
    return float(np.exp(-alpha) + 2.0 * np.exp(-alpha * (levels + 1)).sum())


def _thermal_weights(alpha: float, ell_abs: np.ndarray) -> np.ndarray:
    log_w = -alpha * ell_abs
    return np.exp(log_w - logsumexp(log_w))


def thermal_pdf(alpha: float, L_max: int) -> OamSpectrum:
    """Gibbs populations p(l) = e^-a(|l|+1) / Z renormalized over |l| <= L_max."""
    _check_alpha(alpha)
    if L_max < 0:
        raise ParameterError(f"L_max must be nonnegative, got {L_max}")
    return OamSpectrum(_thermal_weights(alpha, np.abs(ell_axis(L_max)).astype(float)))


def mean_energy(spectrum: OamSpectrum) -> float:
    """Average dimensionless energy sum_l p(l) (|l| + 1)."""
    return float(np.sum(spectrum.p * (np.abs(spectrum.ell) + 1)))


def mean_energy_truncated(spectrum: OamSpectrum, window: int = DEFAULT_WINDOW) -> float:
    return mean_energy(spectrum.window(window))


def thermal_energy(alpha: float) -> float:
    """Untruncated <E> = -d ln Z / d alpha = 1 + q / (1 + q) + q / (1 - q) with q = e^-a."""
    _check_alpha(alpha)
    q = np.exp(-alpha)
    return float(1.0 + q / (1.0 + q) + q / -np.expm1(-alpha))


def relative_entropy(p, q, base: Optional[float] = None) -> float:
    """sum p log(p/q) over raw probability arrays."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionError(f"shapes differ: {p.shape} vs {q.shape}")
    if np.any((q <= 0) & (p > 0)):
        raise SupportError("reference distribution is zero where the data is not")
    value = float(np.sum(rel_entr(p, q)))
    if base is not None:
        value /= np.log(base)
    # Gibbs' inequality; only roundoff can go below zero
    return max(value, 0.0)


def kl_divergence(p_m: OamSpectrum, p_f: OamSpectrum, window: Optional[int] = DEFAULT_WINDOW,
                  base: Optional[float] = None) -> float:
    """D(p_m || p_f) after renormalizing both spectra over |l| <= window (nats by default)."""
    W = min(p_m.L_max, p_f.L_max) if window is None else min(window, p_m.L_max, p_f.L_max)
    return relative_entropy(p_m.window(W).p, p_f.window(W).p, base)


def total_variation(p: OamSpectrum, q: OamSpectrum) -> float:
    if p.L_max != q.L_max:
        raise DimensionError(f"spectra have L_max {p.L_max} and {q.L_max}")
    return float(0.5 * np.abs(p.p - q.p).sum())


@dataclass(frozen=True)
class ThermalFit:
    """Result of a single-parameter thermal fit."""

    alpha: float
    stderr_alpha: float
    Z: float
    residual: float
    kl_to_fit: float
    window: int
    method: str
    n_bins: int

    def model(self) -> OamSpectrum:
        return thermal_pdf(self.alpha, self.window)

    def to_record(self) -> Dict[str, Any]:
        return {
            'alpha': self.alpha,
            'stderr': self.stderr_alpha,
            'Z': self.Z,
            'residual': self.residual,
            'kl_to_fit': self.kl_to_fit,
            'window': self.window,
            'method': self.method,
            'n_bins': self.n_bins,
        }


def _curvature(objective, x: float) -> float:
    h = max(1e-4 * x, 1e-7)
    return (objective(x + h) - 2.0 * objective(x) + objective(x - h)) / h ** 2


def _bracketed_minimum(objective, bounds) -> float:
    # coarse log-spaced scan picks the basin, bounded Brent refines inside it
    grid = np.geomspace(bounds[0], bounds[1], 96)
    values = np.array([objective(a) for a in grid])
    best = int(np.argmin(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    result = minimize_scalar(objective, bounds=(lo, hi), method='bounded',
                             options={'xatol': 1e-12 * max(hi, 1.0), 'maxiter': 500})
    return float(result.x)


def fit_thermal(spectrum: OamSpectrum, window: Optional[int] = DEFAULT_WINDOW,
                bounds=ALPHA_BOUNDS, method: str = 'auto') -> ThermalFit:
    """Fit p(l) = e^-a(|l|+1)/Z to a spectrum restricted to |l| <= window.

    method 'auto' uses the Poisson (multinomial) likelihood when the spectrum carries
    counts and weighted least squares on the probabilities otherwise (weights 1/stderr^2
    when errors are present, uniform if not). 'min-kl' picks the alpha minimising
    D(spectrum || thermal), the likelihood of the probabilities read as relative counts;
    it matches the window mean of |l| exactly.
    """
    if method not in FIT_METHODS:
        raise FitError(f"unknown fit method '{method}', expected one of {FIT_METHODS}")
    if method == 'auto':
        method = 'poisson-mle' if spectrum.counts is not None else 'least-squares'
    if method == 'poisson-mle' and spectrum.counts is None:
        raise FitError("poisson-mle needs a spectrum with counts")

    W = spectrum.L_max if window is None else min(int(window), spectrum.L_max)
    sl = slice(spectrum.L_max - W, spectrum.L_max + W + 1)
    ell_abs = np.abs(ell_axis(W)).astype(float)

    if method == 'poisson-mle':
        counts = spectrum.counts[sl].astype(float)
        total = counts.sum()
        if total == 0:
            raise EmptyCountsError("all counts inside the fit window are zero")
        support = counts > 0
        first_moment = float(np.sum(counts * ell_abs))

        def objective(alpha):
            return alpha * first_moment + total * logsumexp(-alpha * ell_abs)
    elif method == 'min-kl':
        data = spectrum.window(W)
        values = data.p
        support = values > 0
        first_moment = float(np.sum(values * ell_abs))

        def objective(alpha):
            return alpha * first_moment + logsumexp(-alpha * ell_abs)
    else:
        data = spectrum.window(W)
        values = data.p
        weights = np.ones_like(values) if data.stderr is None else 1.0 / np.maximum(data.stderr, 1e-300) ** 2
        support = (values > 0) & (weights > 0)

        def objective(alpha):
            return float(np.sum(weights * (values - _thermal_weights(alpha, ell_abs)) ** 2))

    distinct = np.unique(ell_abs[support]).size
    if distinct < 3:
        raise FitError(f"need at least 3 distinct |l| bins with data, got {distinct}")

    alpha = _bracketed_minimum(objective, bounds)
    if np.isclose(alpha, bounds[0], rtol=1e-3) or np.isclose(alpha, bounds[1], rtol=1e-3):
        logger.warning(f"thermal fit stopped at the search bound alpha={alpha:.6g}")

    curvature = _curvature(objective, alpha)
    model = _thermal_weights(alpha, ell_abs)
    if method == 'poisson-mle':
        stderr = 1.0 / np.sqrt(curvature) if curvature > 0 else float('nan')
        expected = total * model
        residual = float(np.sum(((counts - expected) / poisson_errors(counts)) ** 2))
        observed = OamSpectrum.normalized(counts)
    elif method == 'min-kl':
        # d alpha / d p_l = -(|l| - <|l|>) / Var(|l|), Var being the curvature
        if data.stderr is None or not curvature > 0:
            stderr = float('nan')
        else:
            sensitivity = (ell_abs - first_moment) / curvature
            stderr = float(np.sqrt(np.sum((sensitivity * data.stderr) ** 2)))
        residual = kl_divergence(data, OamSpectrum(model), window=W)
        observed = data
    else:
        residual = objective(alpha)
        if data.stderr is None:
            scale = residual / max(values.size - 1, 1)
        else:
            scale = 1.0
        stderr = float(np.sqrt(2.0 * scale / curvature)) if curvature > 0 else float('nan')
        observed = data

    fit = ThermalFit(
        alpha=alpha,
        stderr_alpha=float(stderr),
        Z=partition_function(alpha),
        residual=residual,
        kl_to_fit=kl_divergence(observed, OamSpectrum(model), window=W),
        window=W,
        method=method,
        n_bins=2 * W + 1,
    )
    logger.debug(f"thermal fit ({method}): alpha={fit.alpha:.6g} +/- {fit.stderr_alpha:.3g}, "
                 f"kl={fit.kl_to_fit:.3g}")
    return fit
