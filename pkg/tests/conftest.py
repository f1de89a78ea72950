import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from plecho.fock import FockBasis, NumberSector
from plecho.hamiltonian import (
    HubbardParams,
    build_hubbard,
    full_spectrum,
    plaquette_product_state,
)
from plecho.lattice import assign_layers, build_geometry, tile_plaquettes


class FourByTwo:
    """Half-filled 4x2 reference system shared across the suite."""

    def __init__(self):
        self.geom = build_geometry(4, 2)
        self.tiling = tile_plaquettes(self.geom, "AAAA")
        self.layers = assign_layers(self.tiling)
        self.sector = NumberSector(4, 4, 8)
        self.basis = FockBasis(self.sector)
        self.params = HubbardParams.uniform(1.0, 8.0)
        self.h = build_hubbard(self.geom, self.params, self.sector,
                               tiling=self.tiling, basis=self.basis)
        self.spectrum = full_spectrum(self.h)
        self.psi_p, self.lambda_p = plaquette_product_state(self.tiling, basis=self.basis)


@pytest.fixture(scope="session")
def four_by_two():
    return FourByTwo()


@pytest.fixture(scope="session")
def optimized_pulses():
    """Floor-quality AA and AB pulses (negative ITE sign), shared by the
    pulse tests and the acceptance suite; these dominate the suite runtime."""
    from plecho.pulse import OptimizeConfig, optimize_pulse

    results = {}
    for kind in ("AA", "AB"):
        config = OptimizeConfig(pair_kind=kind, theta=0.1, sign=-1,
                                restarts=8, seed=2024)
        results[kind] = optimize_pulse(config)
    return results


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
