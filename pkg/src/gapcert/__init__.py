"""Certified lower bounds for spectral gaps of weighted Euclidean measures."""

__version__ = "0.1.0"
