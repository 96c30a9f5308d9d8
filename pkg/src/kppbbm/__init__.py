"""Numerical laboratory for the logarithmic front shift of the
Fisher-KPP equation with small initial data and for the extremal
statistics of branching Brownian motion."""

__version__ = "0.1.0"
