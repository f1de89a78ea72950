"""Gaussian-filtered local density of states from echo time series.

The broadened spectral weight is the two-sided filtered Fourier sum

    D(E) = sum_{m=-R}^{R} c_|m| e^{i E tau_m} G(tau_m),
    c_m  = dtau * (delta / sqrt(2 pi)) * exp(-tau_m^2 delta^2 / 2),

with negative-time echoes supplied by the Hermitian symmetry
G(-tau) = conj(G(tau)). For an exact series this converges (as a Riemann
sum) to sum_n p_n exp(-(E - E_n)^2 / 2 delta^2), so isolated peaks rise to
the eigenstate overlaps p_n.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .echo import EchoSeries, TimeGrid
from .fock import FockVector
from .hamiltonian import Spectrum

TRUNCATION_RATIO_WARN = 1e-3
PEAK_PROMINENCE_FRAC = 0.05


class GridMismatchError(ValueError):
    """Echo series and filter were built on different time grids."""


class FilterTruncationWarning(UserWarning):
    """Filter tail is heavy at tau_max; ringing artifacts likely."""


@dataclass(frozen=True)
class FilterSpec:
    delta: float
    grid: TimeGrid
    coefficients: np.ndarray  # c_m for m = 0..R

    @property
    def truncation_ratio(self) -> float:
        return float(self.coefficients[-1] / self.coefficients[0])


def filter_coefficients(delta: float, grid: TimeGrid) -> FilterSpec:
    if delta <= 0:
        raise ValueError("delta must be positive")
    tau = grid.times
    c = grid.dt * (delta / np.sqrt(2.0 * np.pi)) * np.exp(-(tau**2) * delta**2 / 2.0)
    spec = FilterSpec(delta, grid, c)
    if spec.truncation_ratio > TRUNCATION_RATIO_WARN:
        warnings.warn(
            f"filter tail c_R/c_0 = {spec.truncation_ratio:.2e} > {TRUNCATION_RATIO_WARN:g}; "
            "expect truncation ringing below the spectrum",
            FilterTruncationWarning,
            stacklevel=2,
        )
    return spec


@dataclass
class LdosCurve:
    energies: np.ndarray
    density: np.ndarray
    delta: float
    tau_max: float
    provenance: str
    imag_residue: float
    sigma: np.ndarray | None = None  # ensemble standard deviation, when available


def reconstruct_ldos(series: EchoSeries, filt: FilterSpec, e_grid: np.ndarray) -> LdosCurve:
    """Evaluate the filtered sum on the energy grid; linear in the series."""
    if (series.grid.dt, series.grid.n_points) != (filt.grid.dt, filt.grid.n_points):
        raise GridMismatchError("series and filter grids differ")
    e_grid = np.asarray(e_grid, dtype=float)
    tau = series.grid.times
    c = filt.coefficients
    g = series.g
    # literal two-sided sum; G(-tau) = conj(G(tau)) makes the m < 0 half the
    # conjugate of the m > 0 half, so the result is real up to rounding
    phases = np.exp(1j * np.outer(e_grid, tau[1:]))
    positive_half = phases @ (c[1:] * g[1:])
    two_sided = c[0] * g[0] + positive_half + np.conj(positive_half)
    residue = float(np.abs(two_sided.imag).max()) if len(e_grid) else 0.0
    return LdosCurve(
        energies=e_grid,
        density=two_sided.real,
        delta=filt.delta,
        tau_max=float(series.grid.tau_max),
        provenance=series.provenance,
        imag_residue=residue,
    )


def exact_overlaps(spectrum: Spectrum, psi: FockVector, floor: float = 1e-6):
    """(E_n, |<psi|E_n>|^2) pairs above the floor, sorted by energy."""
    p = spectrum.overlaps(psi)
    total = float(p.sum())
    if abs(total - 1.0) > 1e-10:
        raise AssertionError(f"overlaps sum to {total}, state not normalized")
    keep = p >= floor
    return list(zip(spectrum.energies[keep].tolist(), p[keep].tolist()))


@dataclass(frozen=True)
class PeakEstimate:
    energy: float
    uncertainty: float


def peak_estimate(curve: LdosCurve) -> PeakEstimate:
    """Lowest-energy prominent maximum with quadratic refinement.

    The uncertainty combines the filter width with the ensemble band at the
    peak (in quadrature) when a sigma column is present.
    """
    d = curve.density
    if len(d) < 3:
        raise ValueError("curve too short for peak finding")
    prominence = PEAK_PROMINENCE_FRAC * float(d.max())
    peaks, _ = find_peaks(d, prominence=prominence)
    if len(peaks) == 0:
        raise ValueError("no peak above the prominence floor")
    i = int(peaks.min())
    e = curve.energies
    # parabola through the three points around the maximum
    y0, y1, y2 = d[i - 1], d[i], d[i + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
    de = e[min(i + 1, len(e) - 1)] - e[i]
    energy = float(e[i] + shift * de)
    band = float(curve.sigma[i]) if curve.sigma is not None else 0.0
    return PeakEstimate(energy, float(np.hypot(curve.delta, band)))


def default_energy_grid(e_min: float, e_max: float, n_points: int = 400) -> np.ndarray:
    """Default plotting window: a margin below the spectrum floor up to a
    quarter of the spectral ceiling."""
    return np.linspace(e_min - 2.0, 0.25 * e_max, n_points)
