"""Numerical laboratory for modular Schrodinger dynamics and its dual diffusion pictures."""

__version__ = "0.1.0"
