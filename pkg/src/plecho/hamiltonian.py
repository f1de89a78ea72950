"""Fermi-Hubbard Hamiltonians restricted to fixed number sectors.

Energies are measured in units of the reference hopping t, times in 1/t,
with hbar = k_B = 1. Because every hopping term moves a single species, a
sector Hamiltonian factorizes as

    H = H_up (x) 1  +  1 (x) H_down  +  diag(U * doublons + site potentials),

where H_up/H_down are small one-species hopping matrices over the species
mask lists of the basis. Operators keep this factored form; dense or sparse
full matrices are materialized on demand.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import FockBasis, FockVector, NumberSector, _count_between
from .lattice import (
    INTER_X,
    INTER_Y,
    INTRA_X,
    INTRA_Y,
    LatticeGeometry,
    PlaquetteTiling,
    LABEL_SECTORS,
    build_geometry,
    tile_plaquettes,
)

DENSE_CAP = 6000
HERMITICITY_TOL = 1e-12
DEGENERACY_TOL = 1e-10


class DenseCapError(ValueError):
    """Dense-path request above the dense dimension cap; use iterative paths."""


@dataclass(frozen=True)
class HubbardParams:
    """Couplings of Eq.-style Hubbard Hamiltonians, all in units of t.

    ``t_by_class`` maps superlattice bond classes to hopping amplitudes,
    ``u`` is the on-site interaction and ``mu`` an optional per-site
    spin-independent potential (tilts and gradients live here).
    """

    t_by_class: dict = field(default_factory=dict)
    u: float = 0.0
    mu: np.ndarray | None = None

    def hopping(self, bond_class: str) -> float:
        return float(self.t_by_class.get(bond_class, 0.0))

    def site_potential(self, n_sites: int) -> np.ndarray:
        if self.mu is None:
            return np.zeros(n_sites)
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (n_sites,):
            raise ValueError(f"mu must have length {n_sites}")
        return mu

    @staticmethod
    def uniform(t: float = 1.0, u: float = 0.0, mu: np.ndarray | None = None) -> "HubbardParams":
        return HubbardParams({c: t for c in (INTRA_X, INTRA_Y, INTER_X, INTER_Y)}, u, mu)

    @staticmethod
    def lerp(a: "HubbardParams", b: "HubbardParams", w: float, n_sites: int) -> "HubbardParams":
        classes = set(a.t_by_class) | set(b.t_by_class)
        t = {c: (1 - w) * a.hopping(c) + w * b.hopping(c) for c in classes}
        mu = (1 - w) * a.site_potential(n_sites) + w * b.site_potential(n_sites)
        return HubbardParams(t, (1 - w) * a.u + w * b.u, mu)


def _species_hop_matrix(masks: np.ndarray, bonds, n_sites: int) -> sp.csr_matrix:
    """One-species hopping matrix -sum t_b (c+_i c_j + h.c.) over mask list."""
    rank = {int(m): i for i, m in enumerate(masks)}
    rows, cols, vals = [], [], []
    for b, t in bonds:
        if t == 0.0:
            continue
        for a, m in enumerate(masks):
            m = int(m)
            for src, dst in ((b.i, b.j), (b.j, b.i)):
                if (m >> src) & 1 and not (m >> dst) & 1:
                    new = (m & ~(1 << src)) | (1 << dst)
                    sign = -1.0 if _count_between(m, src, dst) & 1 else 1.0
                    rows.append(rank[new])
                    cols.append(a)
                    vals.append(-t * sign)
    n = len(masks)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _doublon_counts(basis: FockBasis) -> np.ndarray:
    u = basis.up_masks[:, None]
    d = basis.down_masks[None, :]
    return np.bitwise_count(u & d).astype(np.int64).reshape(-1)


def _species_potential(masks: np.ndarray, mu: np.ndarray) -> np.ndarray:
    bits = (masks[:, None] >> np.arange(len(mu))[None, :]) & 1
    return bits @ mu


class SectorOperator:
    """A Hermitian sector-restricted operator in species-factored form."""

    def __init__(self, basis: FockBasis, hu: sp.csr_matrix, hd: sp.csr_matrix,
                 diag: np.ndarray, hermitian: bool = True):
        self.basis = basis
        self.hu = hu
        self.hd = hd
        self.diag = np.asarray(diag, dtype=float)
        self.hermitian = hermitian
        self.dim = basis.dim
        self._dense: np.ndarray | None = None
        self._spectrum: "Spectrum | None" = None
        if hermitian:
            for h in (hu, hd):
                delta = abs(h - h.T)
                if delta.nnz and delta.max() > HERMITICITY_TOL:
                    raise AssertionError("operator assembly broke hermiticity")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Matrix-vector product; safe for concurrent calls on disjoint inputs."""
        nu, nd = len(self.basis.up_masks), len(self.basis.down_masks)
        X = x.reshape(nu, nd)
        Y = self.hu @ X
        Y += (self.hd @ X.T).T
        Y += self.diag.reshape(nu, nd) * X
        return Y.reshape(-1)

    def apply_block(self, X: np.ndarray) -> np.ndarray:
        """Apply to a block of column vectors, shape (dim, k)."""
        nu, nd = len(self.basis.up_masks), len(self.basis.down_masks)
        k = X.shape[1]
        T = X.reshape(nu, nd, k)
        Y = (self.hu @ T.reshape(nu, nd * k)).reshape(nu, nd, k)
        down = self.hd @ T.transpose(1, 0, 2).reshape(nd, nu * k)
        Y += down.reshape(nd, nu, k).transpose(1, 0, 2)
        Y += self.diag.reshape(nu, nd, 1) * T
        return Y.reshape(nu * nd, k)

    def expectation(self, vec: FockVector) -> float:
        val = np.vdot(vec.amplitudes, self.apply(vec.amplitudes))
        return float(val.real)

    def dense(self) -> np.ndarray:
        if self.dim > DENSE_CAP:
            raise DenseCapError(f"dim {self.dim} above dense cap {DENSE_CAP}")
        if self._dense is None:
            nu, nd = len(self.basis.up_masks), len(self.basis.down_masks)
            h = np.kron(self.hu.toarray(), np.eye(nd))
            h += np.kron(np.eye(nu), self.hd.toarray())
            h[np.diag_indices_from(h)] += self.diag
            self._dense = h
        return self._dense

    def sparse(self) -> sp.csr_matrix:
        nu, nd = len(self.basis.up_masks), len(self.basis.down_masks)
        h = sp.kron(self.hu, sp.identity(nd), format="csr")
        h = h + sp.kron(sp.identity(nu), self.hd, format="csr")
        return h + sp.diags(self.diag)

    def __add__(self, other: "SectorOperator") -> "SectorOperator":
        if other.basis is not self.basis:
            raise ValueError("operands live on different bases")
        return SectorOperator(self.basis, (self.hu + other.hu).tocsr(),
                              (self.hd + other.hd).tocsr(), self.diag + other.diag)

    def __mul__(self, c: float) -> "SectorOperator":
        return SectorOperator(self.basis, (c * self.hu).tocsr(),
                              (c * self.hd).tocsr(), c * self.diag)

    __rmul__ = __mul__

    @staticmethod
    def combine(terms: "list[SectorOperator]", coeffs) -> "SectorOperator":
        """Linear combination of same-basis operators (control Hamiltonians)."""
        basis = terms[0].basis
        hu = sum(c * t.hu for c, t in zip(coeffs, terms)).tocsr()
        hd = sum(c * t.hd for c, t in zip(coeffs, terms)).tocsr()
        diag = sum(c * t.diag for c, t in zip(coeffs, terms))
        return SectorOperator(basis, hu, hd, diag)


def build_hubbard(
    geom: LatticeGeometry,
    params: HubbardParams,
    sector: NumberSector,
    tiling: PlaquetteTiling | None = None,
    term_filter: str = "all",
    coupling: tuple[int, int] | None = None,
    basis: FockBasis | None = None,
) -> SectorOperator:
    """Assemble the sector Hamiltonian, optionally restricted to a term subset.

    ``term_filter``: ``all`` | ``intra_only`` (plaquette hops + U + potential)
    | ``inter_only`` (coupling hops only) | ``coupling`` (one coupling's hops,
    with ``coupling=(mu, nu)``) | ``kinetic_only`` (all hops, no diagonal).
    """
    if sector.n_sites != geom.n_sites:
        raise ValueError("sector size does not match geometry")
    if basis is None:
        basis = FockBasis(sector)
    if term_filter in ("inter_only", "coupling") and tiling is None:
        raise ValueError(f"term_filter={term_filter!r} requires a tiling")

    if term_filter == "all" or term_filter == "kinetic_only":
        bonds = [(b, params.hopping(b.bond_class)) for b in geom.bonds]
    elif term_filter == "intra_only":
        bonds = [(b, params.hopping(b.bond_class))
                 for b in geom.bonds_of_class(INTRA_X, INTRA_Y)]
    elif term_filter == "inter_only":
        bonds = [(b, params.hopping(b.bond_class))
                 for b in geom.bonds_of_class(INTER_X, INTER_Y)]
    elif term_filter == "coupling":
        matches = [c for c in tiling.couplings if (c.mu, c.nu) == tuple(sorted(coupling))]
        if not matches:
            raise ValueError(f"no coupling {coupling} in tiling")
        bonds = [(b, params.hopping(b.bond_class)) for b in matches[0].edges]
    else:
        raise ValueError(f"unknown term_filter {term_filter!r}")

    hu = _species_hop_matrix(basis.up_masks, bonds, geom.n_sites)
    hd = _species_hop_matrix(basis.down_masks, bonds, geom.n_sites)

    diag = np.zeros(basis.dim)
    if term_filter in ("all", "intra_only"):
        if params.u != 0.0:
            diag += params.u * _doublon_counts(basis)
        mu = params.site_potential(geom.n_sites)
        if np.any(mu):
            nu_, nd_ = len(basis.up_masks), len(basis.down_masks)
            diag += np.add.outer(
                _species_potential(basis.up_masks, mu),
                _species_potential(basis.down_masks, mu),
            ).reshape(-1)
    return SectorOperator(basis, hu, hd, diag)


@dataclass
class GroundState:
    energy: float
    vector: FockVector
    gap: float
    degenerate: bool


def _fix_phase(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-10 * np.abs(v).max())
    a = v[nz[0]]
    return v * (np.conj(a) / abs(a))


def ground_state(op: SectorOperator) -> GroundState:
    """Lowest eigenpair; a gap below 1e-10 is flagged, not silently resolved.

    Phase convention: the first amplitude above 1e-10 of the maximum is made
    real positive.
    """
    if not op.hermitian:
        raise ValueError("ground_state requires a Hermitian operator")
    if op.dim <= 2:
        w, v = np.linalg.eigh(op.dense())
        energies, vecs = w[:2], v[:, :2]
    elif op.dim <= 600:
        w, v = np.linalg.eigh(op.dense())
        energies, vecs = w[:2], v[:, :2]
    else:
        linop = spla.LinearOperator(op.shape, matvec=op.apply, dtype=float)
        w, v = spla.eigsh(linop, k=2, which="SA")
        order = np.argsort(w)
        energies, vecs = w[order], v[:, order]
    gap = float(energies[1] - energies[0]) if len(energies) > 1 else np.inf
    vec = _fix_phase(vecs[:, 0].astype(complex))
    return GroundState(float(energies[0]), FockVector(op.basis, vec), gap, gap < DEGENERACY_TOL)


@dataclass
class Spectrum:
    """Complete orthonormal eigendecomposition of a dense sector operator."""

    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    basis: FockBasis

    def coefficients(self, vec: FockVector) -> np.ndarray:
        """Eigenbasis coefficients <E_n|psi>."""
        return self.vectors.T @ vec.amplitudes

    def overlaps(self, vec: FockVector) -> np.ndarray:
        c = self.coefficients(vec)
        return np.abs(c) ** 2


def full_spectrum(op: SectorOperator, probe_tol: float = 1e-9) -> Spectrum:
    """Dense eigendecomposition with a reconstruction-residual spot check."""
    if op.dim > DENSE_CAP:
        raise DenseCapError(
            f"dim {op.dim} above dense cap {DENSE_CAP}; use the Krylov paths"
        )
    if op._spectrum is None:
        h = op.dense()
        w, v = np.linalg.eigh(h)
        rng = np.random.default_rng(0)
        scale = max(1.0, float(np.abs(w).max()))
        for _ in range(2):
            x = rng.standard_normal(op.dim)
            x /= np.linalg.norm(x)
            residual = np.linalg.norm(h @ x - v @ (w * (v.T @ x)))
            if residual > probe_tol * scale * np.sqrt(op.dim):
                raise AssertionError(f"eigendecomposition residual {residual:.2e}")
        op._spectrum = Spectrum(w, v, op.basis)
    return op._spectrum


def mean_energy_density(state: FockVector, h_full: SectorOperator, n_sites: int) -> float:
    """e = <psi|H|psi> / N for a normalized state."""
    if abs(state.norm() - 1.0) > 1e-8:
        raise ValueError("state must be normalized")
    return h_full.expectation(state) / n_sites


def thermal_energy_density(op: SectorOperator, temperature: float, n_sites: int) -> float:
    """Canonical energy density at temperature T (k_B = 1), via the spectrum."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    w = full_spectrum(op).energies
    x = -(w - w.min()) / temperature  # max-shift keeps the exponentials bounded
    boltz = np.exp(x)
    return float((w * boltz).sum() / (boltz.sum() * n_sites))


# -- plaquette helpers -------------------------------------------------------

PLAQUETTE_U = 8.0

_plaquette_cache: dict[tuple, GroundState] = {}


def plaquette_geometry() -> LatticeGeometry:
    return build_geometry(2, 2)


def plaquette_ground(label: str, u: float = PLAQUETTE_U) -> GroundState:
    """Ground state of one clean 2x2 plaquette for a doping label A/B/C/D/E."""
    n_up, n_down = LABEL_SECTORS[label]
    key = (label, u)
    if key not in _plaquette_cache:
        geom = plaquette_geometry()
        sector = NumberSector(n_up, n_down, 4)
        if label == "E":
            basis = FockBasis(sector)
            vec = FockVector.basis_state(basis, 0, 0)
            _plaquette_cache[key] = GroundState(0.0, vec, np.inf, False)
        else:
            op = build_hubbard(geom, HubbardParams.uniform(1.0, u), sector)
            _plaquette_cache[key] = ground_state(op)
    return _plaquette_cache[key]


def plaquette_product_state(
    tiling: PlaquetteTiling,
    u: float = PLAQUETTE_U,
    basis: FockBasis | None = None,
) -> tuple[FockVector, float]:
    """Tensor product of per-plaquette ground states and its H_box eigenvalue.

    Returns (Psi_p, lambda_p) with lambda_p the sum of plaquette ground
    energies; inter-plaquette hops contribute nothing to <Psi_p|H|Psi_p>
    because each plaquette carries fixed particle numbers.
    """
    from .fock import product_state

    factors = []
    lambda_p = 0.0
    for cell in tiling.cells:
        gs = plaquette_ground(cell.label, u)
        lambda_p += gs.energy
        factors.append((cell.sites, gs.vector))
    state = product_state(factors, tiling.geom.n_sites, joint_basis=basis)
    return state, lambda_p


def tiling_energy_density(tiling: PlaquetteTiling, u: float = PLAQUETTE_U) -> float:
    """Energy density of the plaquette product state from 2x2-sector ED only."""
    total = sum(plaquette_ground(cell.label, u).energy for cell in tiling.cells)
    return total / tiling.geom.n_sites
