"""Numerical laboratory for wavefield fluctuations in high-contrast random media."""

__version__ = "0.1.0"
