import numpy as np
import pytest

from vortex_thermal.analysis import (
    OamSpectrum,
    fit_thermal,
    kl_divergence,
    mean_energy,
    mean_energy_truncated,
    partition_function,
    poisson_errors,
    relative_entropy,
    thermal_energy,
    thermal_pdf,
    total_variation,
)
from vortex_thermal.detection import sample_counts
from vortex_thermal.errors import DimensionError, EmptyCountsError, FitError, ParameterError, SupportError

ALPHAS = np.round(np.arange(0.1, 1.01, 0.1), 10)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_partition_function_matches_direct_sum(alpha):
    closed = partition_function(alpha)
    direct = partition_function(alpha, L_max=500)
    assert abs(closed - direct) / closed < 1e-9


def test_partition_function_values():
    assert np.isclose(partition_function(0.25), 6.263, atol=1e-3)
    assert np.isclose(partition_function(0.49), 2.550, atol=1e-3)
    assert abs(partition_function(50.0) / np.exp(-50.0) - 1.0) < 1e-20


def test_partition_function_rejects_nonpositive_alpha():
    with pytest.raises(ParameterError):
        partition_function(0.0)
    with pytest.raises(ParameterError):
        thermal_pdf(-1.0, 10)


def test_thermal_pdf_shape():
    p = thermal_pdf(0.25, 200)
    assert np.isclose(p.probability(0) / p.probability(1), np.exp(0.25))
    assert np.isclose(p.probability(0) / p.probability(-1), np.exp(0.25))
    assert np.isclose(p.probability(0), 0.1243, atol=1e-4)
    assert np.isclose(p.p.sum(), 1.0, atol=1e-12)
    assert np.allclose(p.p, p.p[::-1])


def test_mean_energy_ground_state():
    one_hot = np.zeros(21)
    one_hot[10] = 1.0
    assert mean_energy(OamSpectrum(one_hot)) == 1.0


def test_mean_energy_values():
    assert np.isclose(mean_energy(thermal_pdf(0.49, 200)), 2.96, atol=0.01)
    assert np.isclose(mean_energy(thermal_pdf(0.25, 200)), 4.96, atol=0.01)
    assert mean_energy_truncated(thermal_pdf(0.25, 200), 10) < mean_energy(thermal_pdf(0.25, 200))


@pytest.mark.parametrize("alpha", ALPHAS)
def test_energy_is_log_partition_derivative(alpha):
    h = 1e-5
    derivative = -(np.log(partition_function(alpha + h)) - np.log(partition_function(alpha - h))) / (2 * h)
    energy = mean_energy(thermal_pdf(alpha, 500))
    assert abs(energy - derivative) / energy < 1e-6
    assert np.isclose(thermal_energy(alpha), energy, rtol=1e-9)


def test_poisson_errors():
    assert np.allclose(poisson_errors([100, 0, 2500]), [10.0, 1.0, 50.0])


def test_spectrum_validation():
    with pytest.raises(ParameterError):
        OamSpectrum(np.full(5, 0.3))
    with pytest.raises(DimensionError):
        OamSpectrum(np.full(4, 0.25))
    with pytest.raises(ParameterError):
        OamSpectrum(np.array([1.2, -0.2, 0.0]))


def test_spectrum_window_and_table():
    p = thermal_pdf(0.5, 20)
    windowed = p.window(10)
    assert windowed.L_max == 10
    assert np.allclose(windowed.p, thermal_pdf(0.5, 10).p)
    spectrum = OamSpectrum.from_counts(np.array([0, 4, 16, 4, 0]))
    table = spectrum.to_table()
    assert list(table.columns) == ['ell', 'probability', 'error', 'counts']
    assert np.allclose(table['error'], [1 / 24, 2 / 24, 4 / 24, 2 / 24, 1 / 24])


def test_kl_identity():
    p = thermal_pdf(0.3, 12)
    assert kl_divergence(p, p) == 0.0


def test_kl_two_bin_value():
    value = relative_entropy([0.5, 0.5], [0.9, 0.1])
    assert np.isclose(value, 0.5108, atol=1e-4)
    assert np.isclose(relative_entropy([0.5, 0.5], [0.9, 0.1], base=2), value / np.log(2))


def test_kl_random_pairs_nonnegative():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        p, q = rng.dirichlet(np.ones(21), size=2)
        assert relative_entropy(p, q) >= 0.0
        assert relative_entropy(p, p) < 1e-12


def test_kl_support_violation():
    with pytest.raises(SupportError):
        relative_entropy([0.5, 0.5], [1.0, 0.0])


def test_kl_uses_window():
    p = thermal_pdf(0.3, 20)
    q = thermal_pdf(0.3, 10)
    assert np.isclose(kl_divergence(p, q, window=10), 0.0, atol=1e-15)


def test_total_variation():
    assert total_variation(thermal_pdf(0.3, 5), thermal_pdf(0.3, 5)) == 0.0
    assert total_variation(thermal_pdf(0.1, 5), thermal_pdf(5.0, 5)) > 0.5


@pytest.mark.parametrize("alpha", [0.25, 0.49, 0.76])
def test_noiseless_fit_round_trip(alpha):
    fit = fit_thermal(thermal_pdf(alpha, 20))
    assert abs(fit.alpha - alpha) < 1e-6
    assert fit.kl_to_fit < 1e-10
    assert fit.residual < 1e-12
    assert fit.window == 10
    assert np.isclose(fit.Z, partition_function(fit.alpha))


def test_fit_is_monotone():
    fits = [fit_thermal(thermal_pdf(alpha, 15)).alpha for alpha in (0.2, 0.3, 0.8)]
    assert fits[0] < fits[1] < fits[2]


def test_fit_record_fields():
    record = fit_thermal(thermal_pdf(0.4, 12)).to_record()
    assert set(record) >= {'alpha', 'stderr', 'Z', 'residual', 'kl_to_fit', 'window'}


@pytest.mark.parametrize("alpha", [0.25, 0.49, 0.76])
def test_fit_coverage_under_poisson_noise(alpha):
    truth = thermal_pdf(alpha, 20)
    estimates, inside = [], 0
    for seed in range(500):
        fit = fit_thermal(OamSpectrum.from_counts(sample_counts(truth, 1e5, seed)))
        estimates.append(fit.alpha)
        inside += abs(fit.alpha - alpha) <= 3 * fit.stderr_alpha
    assert inside / 500 >= 0.95
    assert abs(np.median(estimates) - alpha) / alpha < 0.02


def test_fit_needs_three_levels():
    p = np.zeros(21)
    p[9:12] = [0.25, 0.5, 0.25]
    with pytest.raises(FitError):
        fit_thermal(OamSpectrum(p))


def test_fit_rejects_empty_counts():
    with pytest.raises(EmptyCountsError):
        OamSpectrum.from_counts(np.zeros(21, dtype=int))


def test_least_kl_fit_matches_window_mean():
    ell = np.arange(-15, 16)
    p = thermal_pdf(0.34, 15).p * (1 + 0.01 * np.abs(ell))
    spectrum = OamSpectrum.normalized(p)
    fit = fit_thermal(spectrum, method='min-kl')
    assert fit.method == 'min-kl'
    observed = spectrum.window(10)
    model = thermal_pdf(fit.alpha, 10)
    assert np.isclose(np.sum(model.p * np.abs(model.ell)), np.sum(observed.p * np.abs(observed.ell)), rtol=1e-6)
    assert np.isclose(fit.residual, fit.kl_to_fit)
    for alpha in (0.98 * fit.alpha, 1.02 * fit.alpha):
        assert kl_divergence(spectrum, thermal_pdf(alpha, 15)) > fit.kl_to_fit


def test_least_kl_fit_round_trip_and_errors():
    fit = fit_thermal(thermal_pdf(0.49, 20), method='min-kl')
    assert abs(fit.alpha - 0.49) < 1e-6
    assert np.isnan(fit.stderr_alpha)
    counts = sample_counts(thermal_pdf(0.49, 20), 1e5, 3)
    with_errors = fit_thermal(OamSpectrum.normalized(counts, poisson_errors(counts)), method='min-kl')
    by_likelihood = fit_thermal(OamSpectrum.from_counts(counts))
    assert np.isclose(with_errors.alpha, by_likelihood.alpha, rtol=1e-6)
    assert np.isclose(with_errors.stderr_alpha, by_likelihood.stderr_alpha, rtol=0.1)


def test_fit_method_validation():
    with pytest.raises(FitError):
        fit_thermal(thermal_pdf(0.4, 12), method='chi-by-eye')
    with pytest.raises(FitError):
        fit_thermal(thermal_pdf(0.4, 12), method='poisson-mle')
    assert fit_thermal(thermal_pdf(0.4, 12), method='auto').method == 'least-squares'
