"""Stochastic evacuation multisimulation inside precomputed two-zone fire histories."""

__version__ = "0.1.0"
