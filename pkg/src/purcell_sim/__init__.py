"""Driven-dissipative cavity-QED simulations of frequency-resolved Purcell
stabilization of entangled emitter states."""

__version__ = "0.1.0"
