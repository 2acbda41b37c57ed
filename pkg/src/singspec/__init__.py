"""Schroedinger operators with potentials in the uniformly local W^{-1}_2 class."""

__version__ = "0.1.0"
