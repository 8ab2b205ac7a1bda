"""Finite-alphabet lab for lossy compression with the likelihood encoder."""

__version__ = "0.1.0"
