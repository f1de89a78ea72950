import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from plecho.fock import FockBasis, FockVector, NumberSector
from plecho.hamiltonian import HubbardParams, build_hubbard, full_spectrum
from plecho.lattice import build_geometry
from plecho.propagate import (
    Propagator,
    evolve_imag,
    evolve_real,
    evolve_schedule,
    lanczos_expv,
    lanczos_expv_multi,
)


@pytest.fixture(scope="module")
def plaquette_prop():
    op = build_hubbard(build_geometry(2, 2), HubbardParams.uniform(1.0, 8.0),
                       NumberSector(2, 2, 4))
    return Propagator(op, mode="exact_dense")


def _random_state(basis, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    return FockVector(basis, v / np.linalg.norm(v))


def test_tau_zero_is_identity(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis)
    out = evolve_real(plaquette_prop, psi, 0.0)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


def test_two_site_echo_is_cosine():
    op = build_hubbard(build_geometry(2, 1), HubbardParams.uniform(1.0, 0.0),
                       NumberSector(1, 0, 2))
    prop = Propagator(op)
    psi = FockVector.basis_state(op.basis, 0b01, 0)
    for tau in (0.3, 1.7, 4.0):
        echo = psi.inner(evolve_real(prop, psi, tau))
        assert echo == pytest.approx(np.cos(tau), abs=1e-12)


def test_unitarity_up_to_long_times(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis, 1)
    for tau in (0.5, 5.0, 20.0):
        assert abs(evolve_real(plaquette_prop, psi, tau).norm() - 1.0) < 1e-9


def test_group_property(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis, 2)
    a = evolve_real(plaquette_prop, evolve_real(plaquette_prop, psi, 1.3), 0.9)
    b = evolve_real(plaquette_prop, psi, 2.2)
    assert np.linalg.norm(a.amplitudes - b.amplitudes) < 1e-8


def test_negative_tau_reverses(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis, 3)
    back = evolve_real(plaquette_prop, evolve_real(plaquette_prop, psi, 2.0), -2.0)
    assert np.linalg.norm(back.amplitudes - psi.amplitudes) < 1e-10


def test_imag_real_consistency(plaquette_prop):
    spec = full_spectrum(plaquette_prop.op)
    psi = _random_state(plaquette_prop.op.basis, 4)
    tau, theta = 1.1, 0.2
    shifted, norm = evolve_imag(plaquette_prop, psi, theta, +1)
    lhs = norm * psi.inner(evolve_real(plaquette_prop, shifted, tau))
    c = np.abs(spec.coefficients(psi)) ** 2
    rhs = np.sum(c * np.exp(-1j * spec.energies * tau + spec.energies * theta))
    assert abs(lhs - rhs) < 1e-8


def test_imag_eigenstate_norm(plaquette_prop):
    spec = full_spectrum(plaquette_prop.op)
    e0 = spec.energies[0]
    psi = FockVector(plaquette_prop.op.basis, spec.vectors[:, 0].astype(complex))
    for sign in (+1, -1):
        out, norm = evolve_imag(plaquette_prop, psi, 0.3, sign)
        assert norm == pytest.approx(np.exp(sign * e0 * 0.3), rel=1e-10)
        assert abs(abs(psi.inner(out)) - 1.0) < 1e-10
    out, norm = evolve_imag(plaquette_prop, psi, 0.0, +1)
    assert norm == 1.0


def test_krylov_matches_dense(four_by_two):
    s = four_by_two
    prop_d = Propagator(s.h, mode="exact_dense")
    prop_k = Propagator(s.h, mode="krylov", tolerance=1e-12)
    for tau in (0.4, 2.0):
        a = evolve_real(prop_d, s.psi_p, tau)
        b = evolve_real(prop_k, s.psi_p, tau)
        assert np.linalg.norm(a.amplitudes - b.amplitudes) < 1e-8
    a, na = evolve_imag(prop_d, s.psi_p, 0.1, +1)
    b, nb = evolve_imag(prop_k, s.psi_p, 0.1, +1)
    assert abs(na - nb) < 1e-10
    assert np.linalg.norm(a.amplitudes - b.amplitudes) < 1e-10


def test_lanczos_against_scipy_oracle():
    rng = np.random.default_rng(5)
    n = 180
    a = sp.random(n, n, density=0.05, random_state=7)
    h = (a + a.T) * 0.5
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for z in (-1j * 2.7, 0.8, -0.5 + 0.0j):
        ref = spla.expm_multiply(z * h.tocsc(), v)
        out = lanczos_expv(lambda x: h @ x, v, z, tol=1e-12)
        assert np.linalg.norm(out - ref) < 1e-9 * np.linalg.norm(ref)
    # multi-z evaluation agrees with one-z calls
    zs = [-1j * 0.1, -1j * 0.35, -1j * 0.5]
    cols = lanczos_expv_multi(lambda x: h @ x, v, zs, tol=1e-12)
    for k, z in enumerate(zs):
        ref = spla.expm_multiply(z * h.tocsc(), v)
        assert np.linalg.norm(cols[:, k] - ref) < 1e-9 * np.linalg.norm(ref)


def test_schedule_constant_matches_evolve_real(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis, 6)
    h_at = lambda s: plaquette_prop.op
    out = evolve_schedule(h_at, psi, 1.5, dt=0.01)
    ref = evolve_real(plaquette_prop, psi, 1.5)
    # midpoint stepping is exact for constant generators
    assert np.linalg.norm(out.amplitudes - ref.amplitudes) < 1e-10


def test_schedule_second_order_convergence():
    from plecho.prepare import schedule_halffilled_A

    sched = schedule_halffilled_A(2.0)
    basis = FockBasis(sched.sector)
    h_at = sched.make_h_at(basis)
    from plecho.hamiltonian import ground_state

    psi = ground_state(h_at(0.0)).vector
    ref = evolve_schedule(h_at, psi, 2.0, dt=0.00125)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        out = evolve_schedule(h_at, psi, 2.0, dt=dt)
        errs.append(np.linalg.norm(out.amplitudes - ref.amplitudes))
    slope = np.polyfit(np.log([0.02, 0.01, 0.005]), np.log(errs), 1)[0]
    assert 1.8 < slope < 2.2


def test_schedule_parameter_validation(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis, 7)
    with pytest.raises(ValueError):
        evolve_schedule(lambda s: plaquette_prop.op, psi, 1.0, dt=0.0)
    out = evolve_schedule(lambda s: plaquette_prop.op, psi, 0.0, dt=0.1)
    assert np.allclose(out.amplitudes, psi.amplitudes)


def test_evolve_real_rejects_nonfinite(plaquette_prop):
    psi = _random_state(plaquette_prop.op.basis, 8)
    with pytest.raises(ValueError):
        evolve_real(plaquette_prop, psi, np.inf)
    with pytest.raises(ValueError):
        evolve_imag(plaquette_prop, psi, 0.1, 2)
    with pytest.raises(ValueError):
        Propagator(plaquette_prop.op, mode="bogus")
