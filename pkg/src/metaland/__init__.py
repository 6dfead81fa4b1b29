"""Metastability analysis for energy landscapes and the Blume-Capel model."""

__version__ = "0.1.0"
