"""Simulation and analysis of the magnetic interaction between two trapped electron spins."""

__version__ = "0.1.0"
