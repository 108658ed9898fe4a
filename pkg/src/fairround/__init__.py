"""Randomized rounding for weighted completion time on unrelated machines."""

__version__ = "0.1.0"
