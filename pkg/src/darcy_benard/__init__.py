"""Spectral Galerkin tools for Darcy-Benard convection of a slightly compressible fluid."""

__version__ = "0.1.0"
