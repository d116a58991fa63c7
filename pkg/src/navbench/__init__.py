"""Desk-scale embodied navigation benchmark engine."""

from navbench.geometry import (
    DEFAULT_RESOLUTION,
    OccupancyGrid,
    PlannedPath,
    astar,
    dilate,
    distance_field,
    geodesic_distance,
    nearest_free_point,
    ray_cast,
)

__version__ = "0.1.0"
