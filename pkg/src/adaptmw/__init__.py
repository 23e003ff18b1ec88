"""Adaptive technical services for a reflective component model."""

__version__ = "0.1.0"
