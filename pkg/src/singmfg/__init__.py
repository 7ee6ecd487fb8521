"""Singular-control mean field games at desk scale."""

__version__ = "0.1.0"
