"""Certified polynomial sub-value functions for finite-horizon optimal control."""

__version__ = "0.1.0"
