"""Particle-flow mesh generation for planar regions and closed solids."""

__version__ = "0.1.0"
