"""Thermal-to-visible face image synthesis and quality evaluation toolkit."""

__version__ = "0.1.0"
