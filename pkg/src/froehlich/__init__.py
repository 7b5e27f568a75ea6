"""Froehlich condensate kinetics: rate equations, master equation, statistics,
stochastic simulation and spectra of a pumped multimode vibrational system."""

__version__ = "0.1.0"
