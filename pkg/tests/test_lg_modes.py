import numpy as np
import pytest

from vortex_thermal.errors import DimensionError, GridResolutionError, GridTruncationError, ParameterError
from vortex_thermal.lg_modes import (
    GridSpec,
    LgIndex,
    TransverseField,
    _lg_profile,
    apply_phase,
    azimuthal_decompose,
    evaluate_lg,
    lg_basis,
    minimum_extent_factor,
    overlap,
    spiral_phase,
)


def test_fundamental_mode_is_real_gaussian(grid, waist):
    u = evaluate_lg(LgIndex(0), waist, grid)
    center = grid.samples_per_axis // 2
    assert np.unravel_index(np.argmax(np.abs(u.amplitudes)), grid.shape) == (center, center)
    assert np.max(np.abs(u.amplitudes.imag)) == 0.0


def test_vortex_core_is_dark(grid, waist):
    u = evaluate_lg(3, waist, grid)
    center = grid.samples_per_axis // 2
    assert u.amplitudes[center, center] == 0


@pytest.mark.parametrize("ell", [-5, -1, 0, 2, 4])
def test_evaluated_modes_are_normalized(grid, waist, ell):
    assert np.isclose(evaluate_lg(ell, waist, grid).norm(), 1.0, atol=1e-6)


@pytest.mark.parametrize("ell", [0, 1, 3])
def test_raw_norm_at_doubled_resolution(grid, waist, ell):
    fine = grid.refined()
    raw = np.sum(np.abs(_lg_profile(ell, waist, fine)) ** 2) * fine.cell_area
    assert np.isclose(raw, 1.0, atol=1e-6)


def test_orthonormality(grid, waist):
    modes = [evaluate_lg(ell, waist, grid) for ell in range(-4, 5)]
    gram = np.array([[overlap(a, b) for b in modes] for a in modes])
    assert np.allclose(gram, np.eye(len(modes)), atol=1e-6)


def test_overlap_is_conjugate_symmetric(grid, waist):
    a = evaluate_lg(1, waist, grid)
    b = apply_phase(evaluate_lg(0, waist, grid), np.random.default_rng(3).uniform(0, 1, grid.shape))
    assert np.isclose(overlap(a, b), np.conj(overlap(b, a)))


def test_gaussian_overlap_closed_form(waist):
    grid = GridSpec(256, 16 * waist)
    value = overlap(evaluate_lg(0, waist, grid), evaluate_lg(0, 2 * waist, grid))
    assert np.isclose(value.real, 0.8, atol=1e-6)
    assert abs(value.imag) < 1e-12


def test_overlap_converges_with_resolution(waist):
    coarse = GridSpec(128, 16 * waist)
    fine = coarse.refined()
    values = [overlap(evaluate_lg(0, waist, g), evaluate_lg(0, 2 * waist, g)) for g in (coarse, fine)]
    assert abs(values[0] - values[1]) < 1e-4


def test_overlap_rejects_mismatched_grids(waist):
    a = evaluate_lg(0, waist, GridSpec(128, 8 * waist))
    b = evaluate_lg(0, waist, GridSpec(128, 9 * waist))
    with pytest.raises(DimensionError):
        overlap(a, b)


def test_zero_phase_leaves_field_unchanged(grid, waist):
    u = evaluate_lg(2, waist, grid)
    assert np.array_equal(apply_phase(u, np.zeros(grid.shape)).amplitudes, u.amplitudes)


def test_phase_preserves_norm(grid, waist):
    u = evaluate_lg(-3, waist, grid)
    phase = np.random.default_rng(0).normal(0, 5, grid.shape)
    assert np.isclose(apply_phase(u, phase).norm(), u.norm(), rtol=1e-12)


def test_phase_shape_mismatch(grid, waist):
    with pytest.raises(DimensionError):
        apply_phase(evaluate_lg(0, waist, grid), np.zeros((64, 64)))


def test_spiral_phase_lowers_to_zero_order(grid, waist):
    lowered = apply_phase(evaluate_lg(1, waist, grid), spiral_phase(-1, grid))
    coefficients = azimuthal_decompose(lowered, waist, 4)
    others = np.delete(coefficients, 4)
    assert np.max(np.abs(others)) < 1e-6
    # r e^{-r^2/w^2} projected on the Gaussian keeps Gamma(3/2)^2 = pi/4 of the power
    assert np.isclose(abs(coefficients[4]) ** 2, np.pi / 4, atol=1e-4)


def test_decompose_single_mode(grid, waist):
    coefficients = azimuthal_decompose(evaluate_lg(2, waist, grid), waist, 5)
    expected = np.zeros(11)
    expected[2 + 5] = 1.0
    assert np.allclose(np.abs(coefficients), expected, atol=1e-6)


def test_decompose_superposition(grid, waist):
    field = (evaluate_lg(1, waist, grid).amplitudes + evaluate_lg(-1, waist, grid).amplitudes) / np.sqrt(2)
    coefficients = azimuthal_decompose(TransverseField(field, grid, waist), waist, 3)
    power = np.abs(coefficients) ** 2
    assert np.isclose(power[3 + 1], 0.5, atol=1e-6)
    assert np.isclose(power[3 - 1], 0.5, atol=1e-6)
    assert power.sum() <= 1 + 1e-6


def test_truncation_error(waist):
    with pytest.raises(GridTruncationError):
        evaluate_lg(5, waist, GridSpec(128, 3 * waist))


def test_resolution_error(waist):
    with pytest.raises(GridResolutionError):
        evaluate_lg(0, waist, GridSpec(64, 100 * waist))


def test_grid_validation():
    with pytest.raises(ParameterError):
        GridSpec(32, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(128, 0.0)
    assert np.isclose(GridSpec(128, 2.0).cell_area, (2.0 / 128) ** 2)


def test_index_range():
    with pytest.raises(ParameterError):
        LgIndex(21, L_max=20)
    assert LgIndex(-3).p == 0


def test_field_table(grid, waist):
    table = evaluate_lg(1, waist, grid).to_table()
    assert list(table.columns) == ['row', 'col', 're', 'im']
    assert len(table) == grid.samples_per_axis ** 2


def test_default_window_holds_highest_mode(waist):
    assert GridSpec.for_waist(waist, 512).physical_extent == pytest.approx(8 * waist)
    assert GridSpec.for_waist(waist, 512, L_max=4).physical_extent == pytest.approx(8 * waist)
    grid = GridSpec.for_waist(waist, 512, L_max=20)
    assert grid.physical_extent > 9 * waist
    assert evaluate_lg(20, waist, grid).norm() == pytest.approx(1.0)
    with pytest.raises(GridTruncationError):
        evaluate_lg(20, waist, GridSpec.for_waist(waist, 512))
    assert GridSpec.for_waist(waist, 512, 12.0, L_max=20).physical_extent == pytest.approx(12 * waist)


def test_minimum_extent_grows_with_mode_order():
    factors = [minimum_extent_factor(L) for L in (0, 5, 10, 20, 40)]
    assert all(a < b for a, b in zip(factors, factors[1:]))
    with pytest.raises(ParameterError):
        minimum_extent_factor(-1)


def test_basis_cache_stays_small(waist):
    lg_basis.cache_clear()
    for n in (64, 96, 128):
        lg_basis(waist, 2, GridSpec(n, 8 * waist))
    info = lg_basis.cache_info()
    assert info.maxsize <= 2
    assert info.currsize <= 2
