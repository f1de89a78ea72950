import numpy as np
import pytest
import scipy.sparse.linalg as spla

from plecho.fock import FockBasis, FockVector, NumberSector
from plecho.hamiltonian import HubbardParams, build_hubbard
from plecho.lattice import INTRA_X, INTRA_Y, assign_layers, build_geometry, tile_plaquettes
from plecho.propagate import Propagator, evolve_real, lanczos_expv
from plecho.pulse import (
    ControlSystem,
    MissingPulseError,
    OptimizeConfig,
    PairSliceEmbedding,
    PairSystem,
    PulseSequence,
    apply_tiled_ite,
    build_ite_rotation,
    coupling_site_map,
    fidelity_and_gradient,
    fock_label,
    ite_target,
    optimize_pulse,
    population_trace,
    pulse_fidelity,
)


@pytest.fixture(scope="module")
def aa_pair():
    return PairSystem("AA")


def test_pair_construction(aa_pair):
    assert aa_pair.basis.dim == 4900
    assert abs(aa_pair.psi_pair.norm() - 1.0) < 1e-12
    assert abs(aa_pair.h_inter.expectation(aa_pair.psi_pair)) < 1e-12
    assert aa_pair.lambda_pair == pytest.approx(2 * (-1.3202349582719326), abs=1e-10)


def test_ite_target_zero_theta(aa_pair):
    phi, n = ite_target(aa_pair, 0.0, -1)
    assert n == 1.0
    assert np.allclose(phi.amplitudes, aa_pair.psi_pair.amplitudes)


def test_ite_target_matches_expm_oracle(aa_pair):
    for sign in (+1, -1):
        phi, n = ite_target(aa_pair, 0.1, sign)
        ref = spla.expm_multiply(sign * 0.1 * aa_pair.h_inter.sparse(),
                                 aa_pair.psi_pair.amplitudes)
        assert n == pytest.approx(np.linalg.norm(ref), rel=1e-12)
        assert np.linalg.norm(phi.amplitudes - ref / np.linalg.norm(ref)) < 1e-11


def test_norm_product_cauchy_schwarz(aa_pair):
    _, n_plus = ite_target(aa_pair, 0.1, +1)
    _, n_minus = ite_target(aa_pair, 0.1, -1)
    assert n_plus * n_minus >= 1.0
    assert n_plus * n_minus == pytest.approx(1.037761372826, abs=1e-9)


def test_zero_length_pulse_fidelity(aa_pair):
    empty = PulseSequence(0.05, np.zeros((0, 3)), 0.0, -1)
    assert pulse_fidelity(aa_pair, empty) == pytest.approx(1.0, abs=1e-12)
    # against the theta = 0.1 target the empty pulse scores the identity overlap
    target, _ = ite_target(aa_pair, 0.1, -1)
    assert pulse_fidelity(aa_pair, empty, target=target) == pytest.approx(0.981437, abs=1e-5)


def test_constant_physical_pulse_matches_direct_evolution(aa_pair):
    steps = np.ones((8, 3))
    pulse = PulseSequence(0.05, steps, 0.1, -1)
    target, _ = ite_target(aa_pair, 0.1, -1)
    fid = pulse_fidelity(aa_pair, pulse, target=target)
    h_phys = aa_pair.control_hamiltonian((1.0, 1.0, 1.0))
    prop = Propagator(h_phys, mode="krylov", tolerance=1e-12)
    evolved = evolve_real(prop, aa_pair.psi_pair, 0.4)
    assert fid == pytest.approx(abs(target.inner(evolved)) ** 2, abs=1e-10)


def test_pulse_bounds_validation():
    with pytest.raises(ValueError):
        PulseSequence(0.05, np.full((2, 3), 11.0), 0.1, -1)
    with pytest.raises(ValueError):
        PulseSequence(0.05, np.full((2, 3), -0.5), 0.1, -1)


def _four_site_system():
    geom = build_geometry(2, 2)
    sector = NumberSector(1, 1, 4)
    basis = FockBasis(sector)
    kx = build_hubbard(geom, HubbardParams({INTRA_X: 1.0}, 0.0), sector, basis=basis)
    ky = build_hubbard(geom, HubbardParams({INTRA_Y: 1.0}, 0.0), sector, basis=basis)
    drift = build_hubbard(geom, HubbardParams({}, 8.0), sector, basis=basis)
    return ControlSystem(basis, (kx, ky), drift)


def test_gradient_matches_finite_differences_small():
    sys4 = _four_site_system()
    rng = np.random.default_rng(7)
    psi = FockVector.basis_state(sys4.basis, 0b0001, 0b0010)
    target = FockVector(sys4.basis, rng.standard_normal(sys4.basis.dim)).normalized()
    x = rng.uniform(0.3, 2.0, size=2 * 3)
    dt = 0.07
    _, grad = fidelity_and_gradient(sys4, dt, x, psi, target)
    eps = 1e-6
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        fd = (fidelity_and_gradient(sys4, dt, xp, psi, target)[0]
              - fidelity_and_gradient(sys4, dt, xm, psi, target)[0]) / (2 * eps)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_optimize_theta_zero_trivial():
    result = optimize_pulse(OptimizeConfig(pair_kind="AB", theta=0.0))
    assert result.fidelity == 1.0
    assert result.pulse.n_steps == 0 and result.pulse.duration == 0.0


# -- plane rotation and slice embedding ---------------------------------------


def test_plane_rotation_properties(aa_pair):
    target, _ = ite_target(aa_pair, 0.1, -1)
    rot = build_ite_rotation(aa_pair.psi_pair, target)
    mapped = rot.apply(aa_pair.psi_pair.amplitudes)
    assert np.linalg.norm(mapped - target.amplitudes) < 1e-12
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4900) + 1j * rng.standard_normal(4900)
    assert np.linalg.norm(rot.apply(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    # identity on the orthogonal complement of span{psi, phi}
    y = x - aa_pair.psi_pair.amplitudes * np.vdot(aa_pair.psi_pair.amplitudes, x)
    y -= rot.u2 * np.vdot(rot.u2, y)
    assert np.linalg.norm(rot.apply(y) - y) < 1e-10
    # collinear target degenerates to the identity
    ident = build_ite_rotation(aa_pair.psi_pair, aa_pair.psi_pair)
    assert np.linalg.norm(ident.apply(x) - x) < 1e-14


def test_slice_embedding_round_trip():
    basis = FockBasis(NumberSector(2, 2, 12))
    emb = PairSliceEmbedding(basis, tuple(range(8)))
    rng = np.random.default_rng(1)
    x = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    y = x.copy()
    total = 0
    for a, b in emb.pair_sectors():
        X = emb.gather(y, a, b)
        total += X.size
        emb.scatter(y, a, b, X)
    assert total == basis.dim  # sectors partition the space
    assert np.allclose(x, y, atol=1e-14)


def test_slice_of_product_state_is_pair_state(four_by_two, aa_pair):
    emb = PairSliceEmbedding(four_by_two.basis, tuple(range(8)))
    X = emb.gather(four_by_two.psi_p.amplitudes.astype(complex), 4, 4)
    assert X.shape == (4900, 1)
    assert np.linalg.norm(X[:, 0] - aa_pair.psi_pair.amplitudes) < 1e-12


def test_coupling_site_maps():
    t = tile_plaquettes(build_geometry(4, 2), "AAAA")
    sites, kind = coupling_site_map(t, 0)
    assert kind == "AA" and sites == tuple(range(8))
    t_ba = tile_plaquettes(build_geometry(4, 2), labels="BA")
    sites, kind = coupling_site_map(t_ba, 0)
    assert kind == "AB"
    assert sites == (3, 2, 1, 0, 7, 6, 5, 4)  # mirrored frame
    t_v = tile_plaquettes(build_geometry(2, 4), "AAAA")
    sites, kind = coupling_site_map(t_v, 0)
    assert kind == "AA"
    assert sites == (0, 2, 4, 6, 1, 3, 5, 7)  # rotated vertical pair


@pytest.mark.parametrize("labels,geom_dims", [
    ("AA", (4, 2)),   # canonical horizontal pair
    ("BA", (4, 2)),   # mirrored
    ("AB", (4, 2)),   # doped
])
def test_single_coupling_tiled_equals_exact(labels, geom_dims):
    geom = build_geometry(*geom_dims)
    tiling = tile_plaquettes(geom, labels=labels)
    layers = assign_layers(tiling)
    from plecho.hamiltonian import plaquette_product_state

    psi_p, _ = plaquette_product_state(tiling)
    h_inter = build_hubbard(geom, HubbardParams.uniform(1.0, 8.0), psi_p.basis.sector,
                            tiling=tiling, term_filter="inter_only", basis=psi_p.basis)
    for sign in (+1, -1):
        theta = 0.1
        out, norm = apply_tiled_ite(tiling, layers, psi_p, theta, sign, "exact_local_ite")
        ref = lanczos_expv(h_inter.apply, psi_p.amplitudes, sign * theta, tol=1e-13)
        ref /= np.linalg.norm(ref)
        assert np.linalg.norm(out.amplitudes - ref) < 1e-10


def test_vertical_pair_tiled_equals_exact():
    geom = build_geometry(2, 4)
    tiling = tile_plaquettes(geom, "AAAA")
    layers = assign_layers(tiling)
    from plecho.hamiltonian import plaquette_product_state

    psi_p, _ = plaquette_product_state(tiling)
    h_inter = build_hubbard(geom, HubbardParams.uniform(1.0, 8.0), psi_p.basis.sector,
                            tiling=tiling, term_filter="inter_only", basis=psi_p.basis)
    out, norm = apply_tiled_ite(tiling, layers, psi_p, 0.1, -1, "exact_local_ite")
    ref = lanczos_expv(h_inter.apply, psi_p.amplitudes, -0.1, tol=1e-13)
    assert norm / np.exp(-0.1 * (2 * -1.3202349582719326)) == pytest.approx(
        np.linalg.norm(ref), rel=1e-10)
    ref /= np.linalg.norm(ref)
    assert np.linalg.norm(out.amplitudes - ref) < 1e-10


def test_tiled_norm_bookkeeping_second_order(four_by_two):
    s = four_by_two
    errs = []
    thetas = (0.2, 0.1, 0.05)
    for theta in thetas:
        for sign in (+1, -1):
            _, combined = apply_tiled_ite(s.tiling, s.layers, s.psi_p, theta, sign,
                                          "exact_local_ite")
            exact = np.linalg.norm(
                lanczos_expv(s.h.apply, s.psi_p.amplitudes, sign * theta, tol=1e-13))
            errs.append(abs(combined - exact) / exact)
    errs = np.array(errs).reshape(3, 2).max(axis=1)
    # O(theta^2)-bounded with the constant frozen from the dev scan; the
    # growing (plus) branch dominates and converges from above
    assert np.all(errs < 7.0 * np.array(thetas) ** 2)
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


def test_apply_tiled_requires_pulse(four_by_two):
    s = four_by_two
    with pytest.raises(MissingPulseError):
        apply_tiled_ite(s.tiling, s.layers, s.psi_p, 0.1, -1, "pulse", pulses={})
    with pytest.raises(ValueError):
        apply_tiled_ite(s.tiling, s.layers, s.psi_p, 0.1, -1, "bogus")


# -- optimized-pulse quality (session fixture, shared with acceptance) --------


def test_optimized_pulse_respects_bounds(optimized_pulses):
    for result in optimized_pulses.values():
        steps = result.pulse.steps
        assert steps.min() >= 0.0 and steps.max() <= 10.0


def test_optimized_pulse_fidelity_recomputes(optimized_pulses, aa_pair):
    result = optimized_pulses["AA"]
    assert result.fidelity >= 0.999
    assert pulse_fidelity(aa_pair, result.pulse) == pytest.approx(result.fidelity, abs=1e-9)


def test_pulse_mode_tiling_matches_exact_to_pulse_error(four_by_two, optimized_pulses):
    s = four_by_two
    pulse = optimized_pulses["AA"].pulse
    out, norm = apply_tiled_ite(s.tiling, s.layers, s.psi_p, 0.1, -1, "pulse",
                                pulses={"AA": pulse})
    exact, _ = apply_tiled_ite(s.tiling, s.layers, s.psi_p, 0.1, -1, "exact_local_ite")
    overlap = abs(np.vdot(exact.amplitudes, out.amplitudes)) ** 2
    assert overlap >= 0.999
    with pytest.raises(ValueError):
        apply_tiled_ite(s.tiling, s.layers, s.psi_p, 0.2, -1, "pulse",
                        pulses={"AA": pulse})


def test_population_trace_structure(optimized_pulses, aa_pair):
    labels, table, kept = population_trace(aa_pair, optimized_pulses["AA"].pulse)
    assert table.shape[0] == optimized_pulses["AA"].pulse.n_steps + 1
    assert table.shape[1] == len(labels)
    assert table.max(axis=0).min() >= 0.005  # floor respected
    assert np.allclose(table[0], np.abs(aa_pair.psi_pair.amplitudes[kept]) ** 2)


def test_fock_label_format():
    basis = FockBasis(NumberSector(1, 1, 4))
    i = basis.index(0b0001, 0b0010)
    assert fock_label(basis, i) == "ud.."
    pair_basis = FockBasis(NumberSector(1, 1, 8))
    j = pair_basis.index(0b00000001, 0b00010000)
    assert fock_label(pair_basis, j) == "u...|d..."
