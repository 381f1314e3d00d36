"""Quantum trajectories: jump, diffusive and discrete unravelings of Lindblad dynamics and their ergodic limits."""

__version__ = "1.0.0"
__author__ = "Quantum Trajectories"
