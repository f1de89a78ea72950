"""plecho: desk-scale simulator of the phase-sensitive Loschmidt-echo protocol
for the Fermi-Hubbard model on a plaquette superlattice."""

__version__ = "0.1.0"
