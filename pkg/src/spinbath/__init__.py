"""Qubit relaxation into a finite bath of two-level systems (single-excitation sector)."""

__version__ = "0.1.0"
