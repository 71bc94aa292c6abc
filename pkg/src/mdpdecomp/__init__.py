"""Plane-clipping decomposition planner for multi-directional 3D printing
with a learned beam-selection scorer."""

__version__ = "0.1.0"
