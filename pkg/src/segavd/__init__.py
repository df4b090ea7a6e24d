"""Anisotropic approximate nearest-neighbor search among line segments."""

__version__ = "0.1.0"
