"""Articulated-object demonstration data generation."""

__version__ = "0.1.0"
