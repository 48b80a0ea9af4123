"""Staircase structures and mean-field training dynamics on the hypercube."""

__version__ = "0.1.0"
