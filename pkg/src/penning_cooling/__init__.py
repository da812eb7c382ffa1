"""Resolved-sideband cooling of small ion Coulomb crystals in a Penning trap."""

__version__ = "0.1.0"
