"""Quasi-Monte Carlo importance sampling for Gaussian-weighted integrals."""

__version__ = "0.1.0"
