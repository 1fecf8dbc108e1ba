"""Transported Gramians, observability constants and critical times for coupled wave systems."""

__version__ = "0.1.0"
