"""Tiny-object inspection: zoom-in detection cascade and imbalanced condition classification."""

__version__ = "0.1.0"
