"""Iteratively refined interactive segmentation with multi-agent RL."""

__version__ = "0.1.0"
