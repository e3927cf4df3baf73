"""Parametrised example spaces and sequences."""
