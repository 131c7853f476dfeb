"""Multi-UAV pathfinding with IFDS shaping, mean-field observations and
model-based multi-step value expansion."""

__version__ = "0.1.0"
