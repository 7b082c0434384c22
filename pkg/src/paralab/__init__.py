"""Numerical laboratory for the constructive machinery of parabolic systems."""

__version__ = "0.1.0"
