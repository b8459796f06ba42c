"""Behavioral simulator for time-domain 1T-1R vector-matrix multipliers."""

__version__ = "0.1.0"
