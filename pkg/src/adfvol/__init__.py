"""Assumed density filtering of Heston volatility and its path-dependent form."""

__version__ = "0.1.0"
