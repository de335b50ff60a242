"""Numerical laboratory for the stability of Schrödinger-Poisson-Newton crystals."""
__version__ = "0.1.0"
