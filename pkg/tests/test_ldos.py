import numpy as np
import pytest

from plecho.echo import EchoSeries, TimeGrid, exact_echo
from plecho.ldos import (
    FilterTruncationWarning,
    GridMismatchError,
    LdosCurve,
    default_energy_grid,
    exact_overlaps,
    filter_coefficients,
    peak_estimate,
    reconstruct_ldos,
)

from test_echo import state, synthetic_spectrum


def test_filter_coefficient_formula():
    grid = TimeGrid(0.1, 10.0)
    with pytest.warns(FilterTruncationWarning):
        filt = filter_coefficients(0.2, grid)
    assert len(filt.coefficients) == 101
    assert filt.coefficients[0] == pytest.approx(0.1 * 0.2 / np.sqrt(2 * np.pi))
    tau = grid.times
    expected = 0.1 * 0.2 / np.sqrt(2 * np.pi) * np.exp(-(tau**2) * 0.04 / 2)
    assert np.allclose(filt.coefficients, expected, rtol=1e-12)
    assert np.all(np.diff(filt.coefficients) <= 0)  # monotone decreasing in |m|
    with pytest.raises(ValueError):
        filter_coefficients(0.0, grid)


def test_truncation_warning_thresholds():
    import warnings

    grid = TimeGrid(0.1, 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        filt = filter_coefficients(1.2, grid)  # tail ratio e^{-72}, silent
    assert filt.truncation_ratio < 1e-3
    with pytest.warns(FilterTruncationWarning):
        filter_coefficients(0.3, TimeGrid(0.1, 10.0 / 3.0))


def _series(spec, psi, grid):
    return exact_echo(spec, psi, grid)


def test_single_line_gives_gaussian_bump():
    spec = synthetic_spectrum([-1.5, 2.0, 5.0])
    psi = state(spec, [1.0, 0.0, 0.0])
    grid = TimeGrid(0.1, 20.0)
    delta = 0.5
    filt = filter_coefficients(delta, grid)
    e_grid = np.linspace(-4.0, 1.0, 501)
    curve = reconstruct_ldos(_series(spec, psi, grid), filt, e_grid)
    assert curve.imag_residue < 1e-10
    expected = np.exp(-((e_grid + 1.5) ** 2) / (2 * delta**2))
    assert np.max(np.abs(curve.density - expected)) < 1e-3
    peak = peak_estimate(curve)
    assert peak.energy == pytest.approx(-1.5, abs=0.01)
    assert peak.uncertainty == pytest.approx(delta)


def test_riemann_sum_converges_with_dt():
    # a broad filter makes the time-domain Riemann (aliasing) error visible
    # at coarse dt; it collapses to rounding once dt resolves 1/delta
    spec = synthetic_spectrum([0.8, 3.0])
    psi = state(spec, [1.0, 0.0])
    delta = 2.0
    e_grid = np.linspace(-1.0, 2.5, 101)
    errs = []
    for dt in (0.8, 0.4, 0.2):
        grid = TimeGrid(dt, 24.0)
        curve = reconstruct_ldos(_series(spec, psi, grid),
                                 filter_coefficients(delta, grid), e_grid)
        expected = np.exp(-((e_grid - 0.8) ** 2) / (2 * delta**2))
        errs.append(np.max(np.abs(curve.density - expected)))
    assert errs[0] > 1e-3 > errs[1] > errs[2]
    assert errs[2] < 1e-12


def test_reconstruction_is_linear_in_series():
    spec = synthetic_spectrum([-1.0, 0.5, 2.0])
    grid = TimeGrid(0.1, 12.0)
    filt = filter_coefficients(0.4, grid)
    e_grid = np.linspace(-3.0, 3.0, 201)
    s1 = _series(spec, state(spec, [0.7, 0.2, 0.1]), grid)
    s2 = _series(spec, state(spec, [0.1, 0.3, 0.6]), grid)
    combo = EchoSeries(grid, np.abs(s1.g + s2.g), s1.phi, s1.g + s2.g, "synthetic")
    d1 = reconstruct_ldos(s1, filt, e_grid).density
    d2 = reconstruct_ldos(s2, filt, e_grid).density
    d12 = reconstruct_ldos(combo, filt, e_grid).density
    assert np.allclose(d12, d1 + d2, atol=1e-12)


def test_exact_input_matches_gaussian_mixture(four_by_two):
    s = four_by_two
    grid = TimeGrid(0.1, 10.0)
    delta = 0.2
    with pytest.warns(FilterTruncationWarning):
        filt = filter_coefficients(delta, grid)
    e_grid = default_energy_grid(s.spectrum.energies[0], s.spectrum.energies[-1])
    curve = reconstruct_ldos(exact_echo(s.spectrum, s.psi_p, grid), filt, e_grid)
    p = s.spectrum.overlaps(s.psi_p)
    mixture = np.exp(-((e_grid[:, None] - s.spectrum.energies[None, :]) ** 2)
                     / (2 * delta**2)) @ p
    # truncation at delta*tau_max = 2 leaves percent-level ringing
    assert np.max(np.abs(curve.density - mixture)) < 0.05
    peak = peak_estimate(curve)
    assert abs(peak.energy - s.spectrum.energies[0]) < delta


def test_grid_mismatch_rejected():
    spec = synthetic_spectrum([0.0, 1.0])
    series = _series(spec, state(spec, [1.0, 0.0]), TimeGrid(0.1, 5.0))
    filt = filter_coefficients(1.0, TimeGrid(0.1, 6.0))
    with pytest.raises(GridMismatchError):
        reconstruct_ldos(series, filt, np.linspace(-1, 1, 10))


def test_exact_overlaps_complete_and_floored():
    spec = synthetic_spectrum([-2.0, 0.0, 1.0, 4.0])
    psi = state(spec, [0.6, 0.4 - 1e-7, 1e-7, 0.0])
    pairs = exact_overlaps(spec, psi, floor=1e-6)
    assert len(pairs) == 2
    assert sum(w for _, w in pairs) == pytest.approx(1.0, abs=1e-5)
    single = exact_overlaps(spec, state(spec, [0, 0, 1.0, 0]))
    assert single == [(1.0, pytest.approx(1.0))]
    with pytest.raises(AssertionError):
        exact_overlaps(spec, EchoStateNotNormalized(spec))


def EchoStateNotNormalized(spec):
    from plecho.fock import FockVector

    return FockVector(spec.basis, np.array([1.0, 1.0, 0.0, 0.0], dtype=complex))


def test_peak_estimate_guards():
    curve = LdosCurve(np.linspace(0, 1, 5), np.ones(5), 0.2, 10.0, "exact", 0.0)
    with pytest.raises(ValueError):
        peak_estimate(curve)  # flat: no peak above prominence
    short = LdosCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 0.2, 10.0, "exact", 0.0)
    with pytest.raises(ValueError):
        peak_estimate(short)


def test_peak_uncertainty_combines_band():
    e = np.linspace(-2, 2, 401)
    d = np.exp(-(e**2) / (2 * 0.3**2))
    sigma = np.full_like(d, 0.4)
    curve = LdosCurve(e, d, 0.3, 10.0, "mean", 0.0, sigma=sigma)
    peak = peak_estimate(curve)
    assert peak.uncertainty == pytest.approx(np.hypot(0.3, 0.4))


def test_resolution_time_tradeoff_peak_stability():
    # holding tau_max * delta fixed, the peak stays put as delta shrinks
    spec = synthetic_spectrum([-1.2, 0.6, 2.2])
    psi = state(spec, [0.7, 0.2, 0.1])
    e_grid = np.linspace(-2.5, 0.5, 601)
    peaks = []
    for delta, tau_max in ((0.6, 5.0), (0.3, 10.0), (0.15, 20.0)):
        grid = TimeGrid(0.05, tau_max)
        curve = reconstruct_ldos(_series(spec, psi, grid),
                                 filter_coefficients(delta, grid), e_grid)
        peaks.append(peak_estimate(curve).energy)
    spread = max(peaks) - min(peaks)
    assert spread < e_grid[1] - e_grid[0] + 0.02
