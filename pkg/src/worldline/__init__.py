"""Worldline Monte Carlo for TE-polarization Casimir and Casimir-Polder energies."""

__version__ = "0.1.0"
