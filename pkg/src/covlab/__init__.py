"""Sampled length spaces, their delta-covers and covering spectra."""

__version__ = "0.1.0"
