"""Appearance-invariant visual place recognition and 6-DoF localization."""

__version__ = "0.1.0"
