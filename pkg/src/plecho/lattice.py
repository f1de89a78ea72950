"""Rectangular lattice geometries, superlattice bond classes, plaquette tilings.

Sites are indexed row-major from the lower-left corner: site = x + n_x * y.
Bond classes follow the period-2 superlattice: a horizontal bond starting at
even column x is ``intra_x`` (inside a 2x2 plaquette), at odd x ``inter_x``;
vertical bonds analogously by row parity. Open boundaries throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INTRA_X = "intra_x"
INTRA_Y = "intra_y"
INTER_X = "inter_x"
INTER_Y = "inter_y"
BOND_CLASSES = (INTRA_X, INTRA_Y, INTER_X, INTER_Y)

# per-plaquette particle content by doping label
LABEL_SECTORS = {
    "A": (2, 2),
    "B": (1, 1),
    "C": (2, 1),
    "D": (1, 2),
    "E": (0, 0),  # empty plaquette, used by reduced-filling test systems
}


class TilingError(ValueError):
    """Lattice dimensions incompatible with the requested tiling."""


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    bond_class: str


@dataclass(frozen=True)
class LatticeGeometry:
    n_x: int
    n_y: int
    bonds: tuple[Bond, ...]

    @property
    def n_sites(self) -> int:
        return self.n_x * self.n_y

    def site(self, x: int, y: int) -> int:
        return x + self.n_x * y

    def coords(self, site: int) -> tuple[int, int]:
        return site % self.n_x, site // self.n_x

    def bonds_of_class(self, *classes: str) -> list[Bond]:
        return [b for b in self.bonds if b.bond_class in classes]


def build_geometry(n_x: int, n_y: int) -> LatticeGeometry:
    """Open-boundary rectangular lattice with superlattice bond classes."""
    if n_x < 1 or n_y < 1:
        raise ValueError("lattice dimensions must be positive")
    bonds = []
    for y in range(n_y):
        for x in range(n_x - 1):
            cls = INTRA_X if x % 2 == 0 else INTER_X
            bonds.append(Bond(x + n_x * y, (x + 1) + n_x * y, cls))
    for y in range(n_y - 1):
        for x in range(n_x):
            cls = INTRA_Y if y % 2 == 0 else INTER_Y
            bonds.append(Bond(x + n_x * y, x + n_x * (y + 1), cls))
    return LatticeGeometry(n_x, n_y, tuple(bonds))


@dataclass(frozen=True)
class Plaquette:
    """One 2x2 cell: anchor is its lower-left site."""

    label: str
    anchor: int
    sites: tuple[int, int, int, int]  # lower-left, lower-right, upper-left, upper-right


@dataclass(frozen=True)
class Coupling:
    """Adjacent plaquette pair with the inter-plaquette edge set between them."""

    mu: int
    nu: int
    edges: tuple[Bond, ...]
    orientation: str  # "x" or "y"


@dataclass(frozen=True)
class PlaquetteTiling:
    geom: LatticeGeometry
    cells: tuple[Plaquette, ...]
    couplings: tuple[Coupling, ...]
    unit_cell: str

    @property
    def n_plaquettes(self) -> int:
        return len(self.cells)

    def labels(self) -> str:
        return "".join(p.label for p in self.cells)


def _cell_label(px: int, py: int, unit_cell: str) -> str:
    if unit_cell == "AAAA":
        return "A"
    if unit_cell == "AAAB":
        return "B" if (px % 2 == 1 and py % 2 == 1) else "A"
    if unit_cell == "ACAD":
        if (px + py) % 2 == 0:
            return "A"
        return "C" if py % 2 == 0 else "D"
    raise TilingError(f"unknown unit cell {unit_cell!r}")


def tile_plaquettes(
    geom: LatticeGeometry, unit_cell: str = "AAAA", labels: str | None = None
) -> PlaquetteTiling:
    """Partition the lattice into 2x2 plaquettes and enumerate couplings.

    ``unit_cell`` selects the repeating label pattern; ``labels`` instead
    assigns explicit per-plaquette labels in row-major plaquette order (used
    for small pair systems such as AB or reduced-filling rows).
    """
    if geom.n_x % 2 or geom.n_y % 2:
        raise TilingError("lattice dimensions must be divisible by 2")
    ncx, ncy = geom.n_x // 2, geom.n_y // 2
    if labels is None:
        if unit_cell in ("AAAB", "ACAD") and (ncx % 2 or ncy % 2):
            raise TilingError(f"{unit_cell} unit cell needs a 4x4-site period")
        labels = "".join(
            _cell_label(px, py, unit_cell) for py in range(ncy) for px in range(ncx)
        )
    else:
        unit_cell = labels
    if len(labels) != ncx * ncy:
        raise TilingError(f"expected {ncx * ncy} labels, got {len(labels)}")
    if any(l not in LABEL_SECTORS for l in labels):
        raise TilingError(f"unknown plaquette label in {labels!r}")

    cells = []
    for py in range(ncy):
        for px in range(ncx):
            x0, y0 = 2 * px, 2 * py
            sites = (
                geom.site(x0, y0),
                geom.site(x0 + 1, y0),
                geom.site(x0, y0 + 1),
                geom.site(x0 + 1, y0 + 1),
            )
            cells.append(Plaquette(labels[py * ncx + px], sites[0], sites))

    site_to_cell = {}
    for idx, p in enumerate(cells):
        for s in p.sites:
            site_to_cell[s] = idx

    pair_edges: dict[tuple[int, int], list[Bond]] = {}
    for b in geom.bonds_of_class(INTER_X, INTER_Y):
        mu, nu = sorted((site_to_cell[b.i], site_to_cell[b.j]))
        pair_edges.setdefault((mu, nu), []).append(b)
    couplings = tuple(
        Coupling(mu, nu, tuple(edges), edges[0].bond_class[-1])
        for (mu, nu), edges in sorted(pair_edges.items())
    )
    return PlaquetteTiling(geom, tuple(cells), couplings, unit_cell)


@dataclass(frozen=True)
class LayerAssignment:
    """Map coupling index -> layer in {1..4}; couplings in one layer have
    pairwise disjoint plaquette supports, so their local unitaries commute."""

    layers: tuple[int, ...]

    @property
    def n_layers(self) -> int:
        return max(self.layers) if self.layers else 0

    def by_layer(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_layers)]
        for ci, l in enumerate(self.layers):
            out[l - 1].append(ci)
        return out


def assign_layers(tiling: PlaquetteTiling) -> LayerAssignment:
    """Four-coloring of couplings by orientation and plaquette-grid parity.

    Horizontal couplings split by the parity of the left plaquette column,
    vertical ones by the parity of the lower plaquette row; the paper leaves
    layer ordering free, so used layers are renumbered 1..k in that canonical
    order.
    """
    raw = []
    for c in tiling.couplings:
        anchor = tiling.cells[c.mu].anchor
        px = (anchor % tiling.geom.n_x) // 2
        py = (anchor // tiling.geom.n_x) // 2
        if c.orientation == "x":
            raw.append(0 if px % 2 == 0 else 1)
        else:
            raw.append(2 if py % 2 == 0 else 3)
    used = sorted(set(raw))
    renumber = {r: k + 1 for k, r in enumerate(used)}
    layers = tuple(renumber[r] for r in raw)
    assignment = LayerAssignment(layers)
    _check_disjoint(tiling, assignment)
    return assignment


def _check_disjoint(tiling: PlaquetteTiling, assignment: LayerAssignment) -> None:
    for members in assignment.by_layer():
        seen: set[int] = set()
        for ci in members:
            c = tiling.couplings[ci]
            if c.mu in seen or c.nu in seen:
                raise AssertionError("layer assignment is not disjoint")
            seen.update((c.mu, c.nu))


def geometry_fingerprint(geom: LatticeGeometry) -> str:
    import hashlib

    key = f"{geom.n_x}x{geom.n_y}:" + ",".join(
        f"{b.i}-{b.j}:{b.bond_class}" for b in geom.bonds
    )
    return hashlib.sha256(key.encode()).hexdigest()[:12]


def serialize_geometry(geom: LatticeGeometry, tiling: PlaquetteTiling | None = None) -> str:
    """Structured text block documenting a geometry (and optional tiling)."""
    lines = [f"dimensions: {geom.n_x} {geom.n_y}", "boundary: open"]
    for b in geom.bonds:
        lines.append(f"bond: {b.i} {b.j} {b.bond_class}")
    if tiling is not None:
        for p in tiling.cells:
            lines.append(f"cell: {p.label} anchor={p.anchor} sites={','.join(map(str, p.sites))}")
        for c in tiling.couplings:
            edges = ";".join(f"{b.i}-{b.j}" for b in c.edges)
            lines.append(f"coupling: {c.mu} {c.nu} edges={edges}")
    return "\n".join(lines) + "\n"
