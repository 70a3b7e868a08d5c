"""Desk-scale laboratory for vanishing-viscosity limits of passive scalar transport on the 2-torus."""

__version__ = "0.1.0"
