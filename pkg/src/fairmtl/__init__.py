"""Fairness-aware multi-task learning toolkit.

Trains shared-bottom multi-task classifiers under three regimes (vanilla,
per-task fairness remediation, fairness gradient routing) and measures the
resulting fairness-accuracy trade-off surface.
"""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
