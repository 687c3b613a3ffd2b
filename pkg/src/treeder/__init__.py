"""Ranked terms and the operations of first-order tree transductions:
matrix-power unfolding, factorisation forests, linear λ-term
normalisation, and register tree transducers."""

__version__ = "0.1.0"
