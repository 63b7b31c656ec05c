"""Numerical verification lab for sectorial elliptic forms with mixed boundary conditions."""

__version__ = "0.1.0"
