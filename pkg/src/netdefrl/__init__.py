"""Adversarial RL testbed for autonomous network defence."""
from ._accel import USE_NUMBA

__version__ = "0.1.0"
