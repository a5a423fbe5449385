"""Delay-coordinate embedding, nearest-neighbour prediction error and related checks."""

__version__ = "0.1.0"
