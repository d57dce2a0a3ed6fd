"""Compatibility tests for the Evans causal structure."""
__version__ = "0.1.0"
