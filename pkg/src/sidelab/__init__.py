"""Finite-difference and Monte Carlo toolkit for jump-driven stochastic integro-differential equations."""
__version__ = "0.1.0"
