"""Real- and imaginary-time propagation of sector vectors.

Two engines: an exact dense path that works in a cached eigenbasis, and a
Lanczos path that only needs matrix-vector products. Both evaluate
exp(z * H) |psi> for z = -i*tau (real time) or z = +-theta (imaginary time).
Time-dependent sweeps use piecewise-constant midpoint stepping, which keeps
every step exactly unitary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import FockVector
from .hamiltonian import DENSE_CAP, SectorOperator, Spectrum, full_spectrum

NORM_UNDERFLOW = 1e-300


class KrylovError(RuntimeError):
    """Lanczos propagation failed to reach the requested residual."""


class StepSizeError(RuntimeError):
    """Schedule stepping drifted off unit norm; reduce dt."""


@dataclass
class Propagator:
    op: SectorOperator
    mode: str = "auto"  # auto | exact_dense | krylov
    tolerance: float = 1e-10
    krylov_dim: int = 30

    def __post_init__(self):
        if self.mode == "auto":
            self.mode = "exact_dense" if self.op.dim <= DENSE_CAP else "krylov"
        if self.mode not in ("exact_dense", "krylov"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def spectrum(self) -> Spectrum:
        return full_spectrum(self.op)

    def apply_exp(self, amplitudes: np.ndarray, z: complex) -> np.ndarray:
        """exp(z*H) @ amplitudes."""
        if self.mode == "exact_dense":
            spec = self.spectrum()
            c = spec.vectors.T @ amplitudes
            return spec.vectors @ (np.exp(z * spec.energies) * c)
        return lanczos_expv(
            self.op.apply, amplitudes, z,
            m_max=self.krylov_dim, tol=self.tolerance,
        )


def evolve_real(p: Propagator, psi: FockVector, tau: float) -> FockVector:
    """exp(-i H tau) |psi>; norm is preserved to the propagator tolerance."""
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    out = p.apply_exp(psi.amplitudes, -1j * tau)
    return FockVector(psi.basis, out)


def evolve_imag(p: Propagator, psi: FockVector, theta: float, sign: int) -> tuple[FockVector, float]:
    """Normalized exp(sign * H * theta) |psi> and the norm it carried.

    ``sign`` is +1 or -1; the returned norm N = ||exp(sign*H*theta)|psi>|| is
    the classically-known reinflation factor of the measurement protocol.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if theta == 0.0:
        return psi.copy(), 1.0
    out = p.apply_exp(psi.amplitudes, sign * theta)
    n = float(np.linalg.norm(out))
    if n < NORM_UNDERFLOW:
        raise FloatingPointError("imaginary-time norm underflow")
    return FockVector(psi.basis, out / n), n


def evolve_schedule(
    h_at,
    psi: FockVector,
    tau_total: float,
    dt: float = 0.01,
    norm_guard: float = 1e-8,
) -> FockVector:
    """Piecewise-constant midpoint integration of a parameter sweep.

    ``h_at(s)`` must return the SectorOperator at schedule position
    s in [0, 1]. Each step applies exp(-i H(s_mid) dt); the global error is
    O(dt^2) and every step is exactly unitary.
    """
    if dt <= 0 or tau_total < 0:
        raise ValueError("need dt > 0 and tau_total >= 0")
    if tau_total == 0:
        return psi.copy()
    n_steps = max(1, int(np.ceil(tau_total / dt)))
    step = tau_total / n_steps
    amps = psi.amplitudes.copy()
    for k in range(n_steps):
        s_mid = (k + 0.5) / n_steps
        op = h_at(s_mid)
        if op.dim <= 512:
            w, v = np.linalg.eigh(op.dense())
            amps = v @ (np.exp(-1j * step * w) * (v.T @ amps))
        else:
            amps = lanczos_expv(op.apply, amps, -1j * step)
    drift = abs(np.linalg.norm(amps) - 1.0)
    if drift > norm_guard:
        raise StepSizeError(f"norm drift {drift:.2e} exceeds {norm_guard:.0e}")
    return FockVector(psi.basis, amps)


def lanczos_expv(apply_h, v: np.ndarray, z: complex, m_max: int = 30,
                 tol: float = 1e-10, _depth: int = 0) -> np.ndarray:
    """exp(z*H) v for Hermitian H given through ``apply_h``.

    Builds a Lanczos basis with full reorthogonalization and exponentiates
    the tridiagonal projection; the residual-based early exit follows the
    classical happy-breakdown/last-weight estimate. If the subspace cap is
    hit before convergence the step is split in half recursively.
    """
    norm_v = np.linalg.norm(v)
    if norm_v == 0.0:
        return v.copy()
    if _depth > 40:
        raise KrylovError("step splitting did not converge")

    out = _lanczos_expv_basis(apply_h, v, (z,), m_max, tol)
    if out is not None:
        return out[:, 0]
    half = lanczos_expv(apply_h, v, z / 2, m_max, tol, _depth + 1)
    return lanczos_expv(apply_h, half, z / 2, m_max, tol, _depth + 1)


def lanczos_expv_multi(apply_h, v: np.ndarray, zs, m_max: int = 40,
                       tol: float = 1e-12) -> np.ndarray:
    """exp(z*H) v for several z from a single Krylov space.

    All arguments share one Lanczos basis; convergence is enforced for the
    largest |z|. Columns of the result follow the order of ``zs``. Used by
    the pulse-gradient quadrature, where every within-step node evolution
    starts from the same vector.
    """
    out = _lanczos_expv_basis(apply_h, v, tuple(zs), m_max, tol)
    if out is not None:
        return out
    # rare fallback: per-argument adaptive splitting
    cols = [lanczos_expv(apply_h, v, z, m_max, tol) for z in zs]
    return np.stack(cols, axis=1)


def _lanczos_expv_basis(apply_h, v, zs: tuple, m_max: int, tol: float):
    """Shared Lanczos engine; returns None if m_max is hit before convergence."""
    norm_v = np.linalg.norm(v)
    if norm_v == 0.0:
        return np.zeros((len(v), len(zs)), dtype=complex)
    z_big = max(zs, key=abs)
    V = [np.asarray(v, dtype=complex) / norm_v]
    alphas: list[float] = []
    betas: list[float] = []
    for j in range(m_max):
        w = apply_h(V[j])
        a = float(np.real(np.vdot(V[j], w)))
        alphas.append(a)
        w = w - a * V[j]
        if j > 0:
            w = w - betas[-1] * V[j - 1]
        for u in V:  # full reorthogonalization; subspace stays small
            w = w - np.vdot(u, w) * u
        b = float(np.linalg.norm(w))
        T = np.diag(alphas)
        if j > 0:
            T += np.diag(betas, 1) + np.diag(betas, -1)
        wT, vT = np.linalg.eigh(T)
        exp_big = vT @ (np.exp(z_big * wT) * vT[0, :])
        happy = b < 1e-14 * max(1.0, abs(a))
        err = abs(z_big) * b * abs(exp_big[-1])
        if happy or err < tol * max(float(np.linalg.norm(exp_big)), 1e-30):
            basis = np.stack(V, axis=1)
            cols = np.empty((len(v), len(zs)), dtype=complex)
            for i, z in enumerate(zs):
                exp_col = exp_big if z == z_big else vT @ (np.exp(z * wT) * vT[0, :])
                cols[:, i] = norm_v * (basis @ exp_col)
            return cols
        betas.append(b)
        V.append(w / b)
    return None
