"""Least-energy solutions of fractional semilinear Dirichlet problems on symmetric domains."""

__version__ = "0.1.0"
