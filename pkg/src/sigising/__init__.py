"""Adaptive traffic-signal control on a periodic lattice posed as per-step Ising minimisation."""

__version__ = "0.1.0"
