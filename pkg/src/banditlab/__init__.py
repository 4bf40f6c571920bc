"""Hybrid offline/online learning for linear contextual bandits with deficient support."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
