"""Spectral solvers for micropolar fluids near potential microflows on the 3-torus."""

__version__ = "0.1.0"
