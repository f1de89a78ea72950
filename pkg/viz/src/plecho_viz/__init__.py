"""Standalone renderer for plecho result tables."""

__version__ = "0.1.0"
