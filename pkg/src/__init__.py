"""Wick-ordered NLS laboratory on the two-dimensional torus."""

__version__ = "0.1.0"
