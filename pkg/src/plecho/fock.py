"""Fixed-number-sector fermionic Fock bases and signed operator actions.

Occupation configurations are stored as integer bitmasks, one per spin
species, with bit ``i`` set when site ``i`` is occupied. The global mode
ordering is all spin-up modes by ascending site index, then all spin-down
modes. Because the Hubbard Hamiltonian never mixes the two species inside a
single quadratic term, Jordan-Wigner-style sign bookkeeping factorizes per
species and cross-species strings never enter matrix elements.

A basis state ``(up_mask, down_mask)`` stands for the ket obtained by
applying first the spin-up creation operators in ascending site order, then
the spin-down ones, to the vacuum.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

DIMENSION_CAP = 10**7


class DimensionCapError(ValueError):
    """Raised when a sector dimension exceeds the configured cap."""


class SectorMismatchError(ValueError):
    """Raised when vectors or operators from incompatible sectors are mixed."""


@dataclass(frozen=True)
class NumberSector:
    """Particle content (n_up, n_down) on a fixed number of sites."""

    n_up: int
    n_down: int
    n_sites: int

    def __post_init__(self):
        if not (0 <= self.n_up <= self.n_sites and 0 <= self.n_down <= self.n_sites):
            raise ValueError(f"invalid sector {self}")

    @property
    def dimension(self) -> int:
        return comb(self.n_sites, self.n_up) * comb(self.n_sites, self.n_down)


def _masks_with_popcount(n_sites: int, n_occ: int) -> np.ndarray:
    """All bitmasks over ``n_sites`` bits with ``n_occ`` set bits, ascending."""
    masks = [sum(1 << i for i in sites) for sites in combinations(range(n_sites), n_occ)]
    return np.array(sorted(masks), dtype=np.int64)


class FockBasis:
    """Deterministic enumeration of one number sector.

    States are ordered lexicographically, up-species major: the ordinal of
    ``(u, d)`` is ``rank(u) * n_down_states + rank(d)`` with each species
    ranked by ascending mask integer.
    """

    def __init__(self, sector: NumberSector, cap: int = DIMENSION_CAP):
        if sector.dimension > cap:
            raise DimensionCapError(
                f"sector dimension {sector.dimension} exceeds cap {cap}"
            )
        self.sector = sector
        self.up_masks = _masks_with_popcount(sector.n_sites, sector.n_up)
        self.down_masks = _masks_with_popcount(sector.n_sites, sector.n_down)
        self._up_rank = {int(m): i for i, m in enumerate(self.up_masks)}
        self._down_rank = {int(m): i for i, m in enumerate(self.down_masks)}
        self.dim = len(self.up_masks) * len(self.down_masks)

    def index(self, up_mask: int, down_mask: int) -> int:
        """Ordinal of a configuration; KeyError if outside the sector."""
        return self._up_rank[up_mask] * len(self.down_masks) + self._down_rank[down_mask]

    def state(self, i: int) -> tuple[int, int]:
        nd = len(self.down_masks)
        return int(self.up_masks[i // nd]), int(self.down_masks[i % nd])

    def states(self):
        """Iterate all (up_mask, down_mask) pairs in basis order."""
        for u in self.up_masks:
            for d in self.down_masks:
                yield int(u), int(d)

    def fingerprint(self) -> str:
        """Short hash identifying sector and ordering, for result-file headers."""
        s = self.sector
        key = f"sites={s.n_sites};up={s.n_up};down={s.n_down};order=lex-int;spin-major=up"
        return hashlib.sha256(key.encode()).hexdigest()[:12]

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        s = self.sector
        return f"FockBasis({s.n_up}u,{s.n_down}d on {s.n_sites} sites; dim={self.dim})"


def enumerate_basis(sector: NumberSector, cap: int = DIMENSION_CAP) -> FockBasis:
    return FockBasis(sector, cap=cap)


def _count_between(mask: int, i: int, j: int) -> int:
    """Occupied modes of ``mask`` strictly between sites i and j."""
    lo, hi = (i, j) if i < j else (j, i)
    window = ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)
    return (mask & window).bit_count()


def hop(state: tuple[int, int], i: int, j: int, spin: str):
    """Move one ``spin`` particle from site ``i`` to site ``j``.

    Returns ``(new_state, sign)`` with the fermionic sign
    ``(-1)**(occupied same-spin modes strictly between i and j)``, or
    ``None`` when site ``i`` is empty or site ``j`` already occupied.
    """
    if i == j:
        raise ValueError("hop requires distinct sites")
    up, down = state
    mask = up if spin == "up" else down
    if not (mask >> i) & 1 or (mask >> j) & 1:
        return None
    new_mask = (mask & ~(1 << i)) | (1 << j)
    sign = -1 if _count_between(mask, i, j) & 1 else 1
    if spin == "up":
        return (new_mask, down), sign
    return (up, new_mask), sign


def double_occupancy(state: tuple[int, int], i: int) -> int:
    """1 iff both species occupy site ``i``."""
    up, down = state
    return (up >> i) & (down >> i) & 1


@dataclass
class FockVector:
    """Complex amplitudes over one FockBasis."""

    basis: FockBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise SectorMismatchError(
                f"amplitude length {self.amplitudes.shape} != basis dim {self.basis.dim}"
            )

    @classmethod
    def zero(cls, basis: FockBasis) -> "FockVector":
        return cls(basis, np.zeros(basis.dim, dtype=complex))

    @classmethod
    def basis_state(cls, basis: FockBasis, up_mask: int, down_mask: int) -> "FockVector":
        v = cls.zero(basis)
        v.amplitudes[basis.index(up_mask, down_mask)] = 1.0
        return v

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector(self.basis, self.amplitudes / n)

    def inner(self, other: "FockVector") -> complex:
        """<self|other>."""
        if other.basis is not self.basis and other.basis.fingerprint() != self.basis.fingerprint():
            raise SectorMismatchError("inner product across different bases")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def copy(self) -> "FockVector":
        return FockVector(self.basis, self.amplitudes.copy())


def _map_mask(mask: int, site_map: tuple[int, ...]) -> tuple[int, int]:
    """Relocate a local-species mask to global sites.

    Returns the global mask and the permutation sign that re-sorts the mapped
    creation string (written in ascending local order) into ascending global
    order.
    """
    mapped = [site_map[i] for i in range(len(site_map)) if (mask >> i) & 1]
    inversions = 0
    for a in range(len(mapped)):
        for b in range(a + 1, len(mapped)):
            if mapped[a] > mapped[b]:
                inversions += 1
    gmask = 0
    for g in mapped:
        if (gmask >> g) & 1:
            raise ValueError("site_map is not injective")
        gmask |= 1 << g
    return gmask, (-1 if inversions & 1 else 1)


def _merge_masks(left: int, right: int) -> tuple[int, int]:
    """Concatenate two same-species global strings and sort to canonical order.

    The sign counts, for each occupied mode of ``right``, the occupied modes
    of ``left`` with larger site index that it must commute through.
    """
    if left & right:
        raise ValueError("overlapping occupations in product state")
    inversions = 0
    r = right
    while r:
        b = (r & -r).bit_length() - 1
        inversions += (left >> (b + 1)).bit_count()
        r &= r - 1
    return left | right, (-1 if inversions & 1 else 1)


def product_state(
    factors,
    n_sites: int,
    joint_basis: FockBasis | None = None,
) -> FockVector:
    """Signed tensor product of subsystem vectors on disjoint site sets.

    ``factors`` is a sequence of ``(sites, FockVector)`` pairs, where
    ``sites`` maps each factor's local site indices onto the joint lattice.
    The joint configuration is the species-major concatenation of the factor
    creation strings (all up operators first, then all down), which makes
    the product exactly associative; the joint norm is the product of the
    factor norms.
    """
    claimed: set[int] = set()
    entries: dict[tuple[int, int], complex] = {(0, 0): 1.0 + 0.0j}
    n_up = n_down = 0
    for sites, vec in factors:
        sites = tuple(sites)
        if vec.basis.sector.n_sites != len(sites):
            raise SectorMismatchError("site list does not match factor size")
        if claimed & set(sites):
            raise ValueError("factor site sets overlap")
        claimed.update(sites)
        n_up += vec.basis.sector.n_up
        n_down += vec.basis.sector.n_down
        mapped = []
        for i, a in enumerate(vec.amplitudes):
            if a == 0.0:
                continue
            u, d = vec.basis.state(i)
            gu, s1 = _map_mask(u, sites)
            gd, s2 = _map_mask(d, sites)
            mapped.append((gu, gd, s1 * s2 * a))
        new_entries: dict[tuple[int, int], complex] = {}
        for (acc_u, acc_d), amp in entries.items():
            for gu, gd, a in mapped:
                u2, su = _merge_masks(acc_u, gu)
                d2, sd = _merge_masks(acc_d, gd)
                key = (u2, d2)
                new_entries[key] = new_entries.get(key, 0.0) + su * sd * amp * a
        entries = new_entries

    if max(claimed, default=-1) >= n_sites:
        raise ValueError("factor sites exceed the joint lattice")
    joint_sector = NumberSector(n_up, n_down, n_sites)
    if joint_basis is None:
        joint_basis = FockBasis(joint_sector)
    elif joint_basis.sector != joint_sector:
        raise SectorMismatchError(
            f"joint basis sector {joint_basis.sector} != composed {joint_sector}"
        )
    out = FockVector.zero(joint_basis)
    for (u, d), amp in entries.items():
        out.amplitudes[joint_basis.index(u, d)] = amp
    return out


def embed_product(
    vec_left: FockVector,
    vec_right: FockVector,
    n_sites: int,
    site_map_left,
    site_map_right,
    joint_basis: FockBasis | None = None,
) -> FockVector:
    """Two-factor convenience wrapper around :func:`product_state`."""
    return product_state(
        [(site_map_left, vec_left), (site_map_right, vec_right)],
        n_sites,
        joint_basis=joint_basis,
    )
