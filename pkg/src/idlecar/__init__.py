"""Idling-car detection from long-wavelength IR image sequences."""

__version__ = "0.1.0"
