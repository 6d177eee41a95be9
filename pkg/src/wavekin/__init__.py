"""Numerical laboratory for damped/driven wave turbulence on a large torus."""

__version__ = "0.1.0"
