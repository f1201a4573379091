"""Exact Fedosov quantization and its BV transfer on symplectic charts."""

__version__ = "0.1.0"
