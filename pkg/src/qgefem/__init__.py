"""Conforming Argyris finite elements for the one-layer quasi-geostrophic equations."""
__version__ = "0.1.0"
