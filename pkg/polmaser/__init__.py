"""Micromaser pumped by coherent three-level atoms."""

__all__ = ["__version__"]

__version__ = "0.1.0"
