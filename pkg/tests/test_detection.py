import numpy as np
import pytest

from vortex_thermal.analysis import OamSpectrum, fit_thermal, thermal_pdf, total_variation
from vortex_thermal.detection import (
    CoherentState,
    DetectorConfig,
    MaskOp,
    aperture_efficiency,
    aperture_efficiency_closed_form,
    coherent_thermal_state,
    heralded_spectrum,
    heralded_state,
    mask_detection,
    mask_shift_detection,
    sample_counts,
    scan_masks,
    thermal_mask,
)
from vortex_thermal.errors import GridResolutionError, ModeRangeError, ParameterError
from vortex_thermal.lg_modes import GridSpec
from vortex_thermal.spdc_source import joint_amplitudes_thermal, reduced_spectrum


@pytest.fixture
def source():
    return joint_amplitudes_thermal(0.25, 20)


def test_zero_shift_is_most_likely(source):
    probabilities = [mask_shift_detection(source, m) for m in range(-20, 21)]
    assert int(np.argmax(probabilities)) == 20


def test_shift_ratio(source):
    p0 = mask_shift_detection(source, 0)
    assert np.isclose(mask_shift_detection(source, 1) / p0, np.exp(-0.25))
    assert np.isclose(mask_shift_detection(source, -1) / p0, np.exp(-0.25))


def test_scan_reproduces_reduced_spectrum(source):
    assert np.allclose(scan_masks(source).p, reduced_spectrum(source).p, rtol=0, atol=1e-15)


def test_shift_out_of_range(source):
    with pytest.raises(ModeRangeError):
        mask_shift_detection(source, 21)


def test_mask_validation():
    with pytest.raises(ParameterError):
        MaskOp(((1, 1.0), (1, 0.5)))
    with pytest.raises(ParameterError):
        MaskOp(())
    assert MaskOp.shift(-2).max_shift == 2


def test_superposition_mask_detection(source):
    mask = MaskOp(((1, 1 / np.sqrt(2)), (-1, 1 / np.sqrt(2))))
    assert np.isclose(mask_detection(source, mask), mask_shift_detection(source, 1))


def test_open_iris_passes_everything(waist):
    grid = GridSpec(256, 12 * waist)
    for ell in range(11):
        assert aperture_efficiency(ell, 10 * waist, waist, grid) > 0.999


def test_half_power_diameter(waist):
    grid = GridSpec(512, 8 * waist)
    diameter = waist * np.sqrt(2 * np.log(2))
    assert np.isclose(aperture_efficiency_closed_form(0, diameter, waist), 0.5)
    assert np.isclose(aperture_efficiency(0, diameter, waist, grid), 0.5, atol=2e-3)


@pytest.mark.parametrize("ell, ratio", [(0, 1.0), (2, 1.5), (5, 2.5)])
def test_quadrature_matches_encircled_power(waist, ell, ratio):
    grid = GridSpec(512, 8 * waist)
    assert np.isclose(aperture_efficiency(ell, ratio * waist, waist, grid),
                      aperture_efficiency_closed_form(ell, ratio * waist, waist), atol=2e-3)


def test_efficiency_decreases_with_ell(grid, waist):
    eta = [aperture_efficiency(ell, 1.5 * waist, waist, grid) for ell in (0, 1, 3)]
    assert eta[2] < eta[1] < eta[0]


def test_iris_resolution_error(grid, waist):
    with pytest.raises(GridResolutionError):
        aperture_efficiency(0, 4 * grid.cell_size, waist, grid)


def test_bucket_is_full_trace(source):
    p = heralded_spectrum(source, DetectorConfig.bucket())
    assert np.allclose(p.p, thermal_pdf(0.25, 20).p)
    assert abs(fit_thermal(p).alpha - 0.25) < 1e-6


def test_infinite_iris_is_bucket(waist):
    j = joint_amplitudes_thermal(0.35, 12)
    bucket = heralded_spectrum(j, DetectorConfig.bucket())
    assert total_variation(heralded_spectrum(j, DetectorConfig.aperture(np.inf)), bucket) < 1e-6
    grid = GridSpec(256, 12 * waist)
    wide_open = heralded_spectrum(j, DetectorConfig.aperture(1e3 * waist), waist, grid)
    assert total_variation(wide_open, bucket) < 1e-6


def test_smaller_iris_cools(waist):
    j = joint_amplitudes_thermal(0.35, 12)
    grid = GridSpec(256, 12 * waist)
    spectra = [heralded_spectrum(j, DetectorConfig.aperture(d * waist), waist, grid) for d in (3.0, 2.0, 1.16)]
    alphas = [fit_thermal(p).alpha for p in spectra]
    assert 0.35 < alphas[0] < alphas[1] < alphas[2]
    for p in spectra:
        assert np.allclose(p.p, p.p[::-1])
        assert np.isclose(p.p.sum(), 1.0)


def test_closed_iris_heralds_ground_state(waist):
    j = joint_amplitudes_thermal(0.35, 8)
    grid = GridSpec(512, 8 * waist)
    p = heralded_spectrum(j, DetectorConfig.aperture(8 * grid.cell_size), waist, grid)
    assert p.probability(0) > 0.99


def test_coherent_thermal_state():
    state = coherent_thermal_state(0.76, 15)
    assert np.allclose(state.populations().p, thermal_pdf(0.76, 15).p, atol=1e-14)
    assert np.isclose(state.purity(), 1.0)
    assert np.all(state.a.imag == 0)


def test_coherent_state_phases_and_literal_weights():
    phases = np.linspace(0, np.pi, 11)
    state = coherent_thermal_state(0.5, 5, phases=phases)
    assert np.allclose(np.angle(state.a), phases)
    literal = coherent_thermal_state(0.5, 5, literal_weights=True)
    assert np.allclose(literal.populations().p, thermal_pdf(1.0, 5).p)


def test_coherent_state_normalization():
    with pytest.raises(ParameterError):
        CoherentState(np.array([1.0, 1.0, 1.0]))


def test_fiber_projection_heralds_product_temperature():
    j = joint_amplitudes_thermal(0.3, 15)
    state = heralded_state(j, thermal_mask(0.4, 15))
    assert np.allclose(state.populations().p, thermal_pdf(0.7, 15).p)
    p = heralded_spectrum(j, DetectorConfig.fiber_projection(thermal_mask(0.4, 15)))
    assert np.allclose(p.p, state.populations().p)


def test_sample_counts_deterministic():
    p = thermal_pdf(0.25, 20)
    assert np.array_equal(sample_counts(p, 1e5, 7), sample_counts(p, 1e5, 7))
    assert not np.array_equal(sample_counts(p, 1e5, 7), sample_counts(p, 1e5, 8))
    assert np.all(sample_counts(p, 1e-9, 7) == 0)
    with pytest.raises(ParameterError):
        sample_counts(p, 0.0, 7)


def test_sample_counts_concentrate():
    p = thermal_pdf(0.25, 20)
    frequencies = sample_counts(p, 1e6, 42) / 1e6
    inside = np.abs(frequencies - p.p) <= 3 * np.sqrt(p.p / 1e6)
    assert inside.mean() >= 0.95


def test_sample_counts_mean_converges():
    p = thermal_pdf(0.5, 6)
    mean = np.mean([sample_counts(p, 1e4, seed) for seed in range(200)], axis=0) / 1e4
    assert np.allclose(mean, p.p, atol=3e-3)
    assert isinstance(OamSpectrum.from_counts(sample_counts(p, 1e4, 0)), OamSpectrum)


def test_aperture_on_default_grid():
    j = joint_amplitudes_thermal(0.35, 20)
    p = heralded_spectrum(j, DetectorConfig.aperture(1e-3))
    assert p.L_max == 20
    assert np.isclose(p.p.sum(), 1.0)
    assert fit_thermal(p).alpha > 0.35
