"""Exact simulation and mean-field analysis of age dependent Hawkes networks."""

__version__ = "0.1.0"
