"""Finite volume schemes for scalar conservation laws on (moving) triangulated surfaces."""
__version__ = "0.1.0"
