"""Birkhoff normal forms and nonlinear bandgaps of cubically coupled oscillators."""

__version__ = "0.1.0"
