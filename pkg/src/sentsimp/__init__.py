"""Desk-scale sentence simplification: transformer variants, training, SARI."""

__version__ = "0.1.0"
