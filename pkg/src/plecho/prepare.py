"""Adiabatic preparation of 2x2 plaquette ground states.

Half-filled plaquettes follow the two-step path: delocalize the two doublons
against a horizontal tilt, then ramp up vertical hopping and interaction.
Doped plaquettes (labels B, C, D) add a degeneracy-breaking potential that is
ramped off in a final segment so the prepared state targets the clean
plaquette Hamiltonian.

The degeneracy-breaking "linear" potential is mu_k = k t. The site
enumeration order of k is a per-label choice, fixed so that the protocol's
initial Fock states are unique zero-hopping ground states with a gap of
order t in the presence of the global horizontal tilt:

* B uses row-major order (planar gradient x + 2y), which keeps the
  delocalization step gentle and the whole path gap above 0.9t;
* C and D use column-major order (planar gradient 2x + y), which uniquely
  selects the doublon-plus-majority-spin initial state (doublon on the
  lower-left site, extra spin on the upper-left site).

Doped ramps keep the two-step structure of the half-filled path (delocalize,
then raise t_y and U) with the gradient held through both ramps. B releases
the gradient in a final segment; C and D hold it to the end because their
clean-plaquette ground states are exactly degenerate (orbital doublet), so a
release would close the gap at s = 1 and leave no unique target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fock import FockBasis, FockVector, NumberSector
from .hamiltonian import (
    GroundState,
    HubbardParams,
    SectorOperator,
    build_hubbard,
    full_spectrum,
    ground_state,
    plaquette_geometry,
)
from .lattice import INTRA_X, INTRA_Y, LABEL_SECTORS
from .propagate import evolve_schedule

GAP_SCAN_POINTS = 101
PLAQUETTE_U = 8.0


def _plaquette_params(t_x: float, t_y: float, u: float, mu: np.ndarray | None) -> HubbardParams:
    return HubbardParams({INTRA_X: t_x, INTRA_Y: t_y}, u, mu)


def tilt_potential(delta_mu_x: float = 1.0) -> np.ndarray:
    """Horizontal tilt favoring the left column (doublon sites)."""
    return delta_mu_x * np.array([0.0, 1.0, 0.0, 1.0])


def gradient_potential(strength: float = 1.0, order: str = "row") -> np.ndarray:
    """Degeneracy-breaking gradient mu_k = k * strength over plaquette sites.

    ``order`` fixes the enumeration of k: "row" (lower-left, lower-right,
    upper-left, upper-right) or "col" (lower-left, upper-left, lower-right,
    upper-right)."""
    if order == "row":
        return strength * np.array([0.0, 1.0, 2.0, 3.0])
    if order == "col":
        return strength * np.array([0.0, 2.0, 1.0, 3.0])
    raise ValueError(f"unknown gradient order {order!r}")


def offset_potential(depth: float = 1.0) -> np.ndarray:
    """Local energy offset deepening the lower-left site."""
    return np.array([-depth, 0.0, 0.0, 0.0])


@dataclass
class Schedule:
    """Piecewise-linear parameter ramp for one plaquette sector."""

    breakpoints: list[tuple[float, HubbardParams]]
    tau_total: float
    sector: NumberSector
    label: str = "A"
    release_checkpoint: float | None = None  # s before the potential release

    def __post_init__(self):
        s_values = [s for s, _ in self.breakpoints]
        if s_values[0] != 0.0 or s_values[-1] != 1.0 or sorted(s_values) != s_values:
            raise ValueError("breakpoints must cover [0, 1] in increasing order")

    def params_at(self, s: float) -> HubbardParams:
        if not 0.0 <= s <= 1.0:
            raise ValueError("s outside [0, 1]")
        pts = self.breakpoints
        for (s0, p0), (s1, p1) in zip(pts, pts[1:]):
            if s <= s1:
                w = 0.0 if s1 == s0 else (s - s0) / (s1 - s0)
                return HubbardParams.lerp(p0, p1, w, 4)
        return pts[-1][1]

    def make_h_at(self, basis: FockBasis):
        geom = plaquette_geometry()

        def h_at(s: float) -> SectorOperator:
            return build_hubbard(geom, self.params_at(s), self.sector, basis=basis)

        return h_at


def schedule_halffilled_A(tau_total: float = 16.0) -> Schedule:
    """Two-step path: delocalize doublons, then ramp t_y and U together."""
    h0 = _plaquette_params(0.0, 0.0, 0.0, tilt_potential(1.0))
    hi = _plaquette_params(1.0, 0.0, 0.0, None)
    h1 = _plaquette_params(1.0, 1.0, PLAQUETTE_U, None)
    return Schedule([(0.0, h0), (0.5, hi), (1.0, h1)], tau_total, NumberSector(2, 2, 4), "A")


# time fractions of the delocalization and interaction ramps; tuned so the
# corner-induced diabatic errors of the three segments roughly balance
DOPED_S_DELOC = 0.25
DOPED_S_RAMP = 0.70


def _doped_schedule(label: str, gradient: str, tau_total: float, release: bool) -> Schedule:
    sector = NumberSector(*LABEL_SECTORS[label], 4)
    if gradient == "linear":
        pot = gradient_potential(1.0, order="row" if label == "B" else "col")
    elif gradient == "local_offset":
        pot = offset_potential(1.0)
    elif gradient == "none":
        pot = np.zeros(4)
    else:
        raise ValueError(f"unknown gradient variant {gradient!r}")
    h0 = _plaquette_params(0.0, 0.0, 0.0, pot + tilt_potential(1.0))
    ha = _plaquette_params(1.0, 0.0, 0.0, pot)
    hb = _plaquette_params(1.0, 1.0, PLAQUETTE_U, pot)
    if release:
        h1 = _plaquette_params(1.0, 1.0, PLAQUETTE_U, None)
        points = [(0.0, h0), (DOPED_S_DELOC, ha), (DOPED_S_RAMP, hb), (1.0, h1)]
        return Schedule(points, tau_total, sector, label,
                        release_checkpoint=DOPED_S_RAMP)
    points = [(0.0, h0), (DOPED_S_DELOC, ha), (1.0, hb)]
    return Schedule(points, tau_total, sector, label)


def schedule_doped_B(gradient: str = "linear", tau_total: float = 40.0) -> Schedule:
    """Doped (1 up, 1 down) plaquette ramp; the potential is released at the
    end so the target is the clean plaquette ground state (unique, gap 1.2t)."""
    return _doped_schedule("B", gradient, tau_total, release=True)


def schedule_doped_CD(spin: str, gradient: str = "linear", tau_total: float = 64.0) -> Schedule:
    """C misses a down spin, D an up spin; both share one ramp by spin symmetry.

    The breaking potential is held to the end: the clean C/D plaquette ground
    state is exactly twofold degenerate, so releasing it would close the gap.
    """
    if spin not in ("C", "D"):
        raise ValueError("spin must be 'C' or 'D'")
    return _doped_schedule(spin, gradient, tau_total, release=False)


@dataclass
class PreparationReport:
    final_state: FockVector
    fidelity: float
    min_gap: float
    sweep_time: float
    label: str
    s_grid: np.ndarray = field(repr=False)
    gap_trace: np.ndarray = field(repr=False)
    target_degenerate: bool = False
    release_cost: float = 0.0


def gap_scan(sched: Schedule, basis: FockBasis | None = None,
             n_points: int = GAP_SCAN_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Instantaneous E_1(s) - E_0(s) on a uniform s grid."""
    if basis is None:
        basis = FockBasis(sched.sector)
    h_at = sched.make_h_at(basis)
    s_grid = np.linspace(0.0, 1.0, n_points)
    gaps = np.empty(n_points)
    for k, s in enumerate(s_grid):
        w = np.linalg.eigvalsh(h_at(s).dense())
        gaps[k] = w[1] - w[0]
    return s_grid, gaps


def _subspace_fidelity(state: FockVector, op: SectorOperator, gs: GroundState) -> float:
    """|<target|psi>|^2, projecting onto the full degenerate ground space."""
    if not gs.degenerate:
        return abs(gs.vector.inner(state)) ** 2
    spec = full_spectrum(op)
    members = spec.energies - spec.energies[0] < 1e-9
    c = spec.vectors[:, members].T @ state.amplitudes
    return float(np.sum(np.abs(c) ** 2))


def run_preparation(sched: Schedule, dt: float = 0.01) -> PreparationReport:
    """Evolve the s=0 ground state along the ramp and score it at s=1."""
    basis = FockBasis(sched.sector)
    h_at = sched.make_h_at(basis)
    start = ground_state(h_at(0.0))
    if start.degenerate:
        raise ValueError("initial Hamiltonian has a degenerate ground state")

    s_c = sched.release_checkpoint
    if s_c is None:
        final = evolve_schedule(h_at, start.vector, sched.tau_total, dt)
        release_cost = 0.0
    else:
        mid = evolve_schedule(
            lambda s: h_at(s * s_c), start.vector, s_c * sched.tau_total, dt
        )
        op_mid = h_at(s_c)
        fid_mid = _subspace_fidelity(mid, op_mid, ground_state(op_mid))
        final = evolve_schedule(
            lambda s: h_at(s_c + (1 - s_c) * s), mid, (1 - s_c) * sched.tau_total, dt
        )
        op_end = h_at(1.0)
        fid_end = _subspace_fidelity(final, op_end, ground_state(op_end))
        release_cost = max(0.0, fid_mid - fid_end)

    op_end = h_at(1.0)
    target = ground_state(op_end)
    fidelity = _subspace_fidelity(final, op_end, target)
    s_grid, gaps = gap_scan(sched, basis)
    return PreparationReport(
        final_state=final,
        fidelity=fidelity,
        min_gap=float(gaps.min()),
        sweep_time=sched.tau_total,
        label=sched.label,
        s_grid=s_grid,
        gap_trace=gaps,
        target_degenerate=target.degenerate,
        release_cost=release_cost,
    )


def reverse_sweep(sched: Schedule) -> Schedule:
    """Traverse the path 1 -> 0 at the same total duration."""
    pts = [(1.0 - s, p) for s, p in reversed(sched.breakpoints)]
    return Schedule(pts, sched.tau_total, sched.sector, sched.label)


def sweep_time_scan(
    schedule_factory,
    tau_grid,
    dt: float = 0.01,
) -> list[tuple[float, float]]:
    """(tau_total, infidelity) pairs over a grid of sweep times."""
    out = []
    for tau in tau_grid:
        rep = run_preparation(schedule_factory(tau), dt)
        out.append((float(tau), 1.0 - rep.fidelity))
    return out


def find_sweep_time(
    schedule_factory,
    max_infidelity: float = 1e-3,
    tau_grid=(2.0, 4.0, 8.0, 16.0, 32.0, 64.0),
    dt: float = 0.01,
) -> tuple[float, list[tuple[float, float]]]:
    """Smallest grid sweep time reaching the infidelity target."""
    scan = sweep_time_scan(schedule_factory, tau_grid, dt)
    for tau, infid in scan:
        if infid < max_infidelity:
            return tau, scan
    raise RuntimeError(f"no sweep time on the grid reaches infidelity {max_infidelity}")
