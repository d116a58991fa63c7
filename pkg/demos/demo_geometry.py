"""Occupancy grids, dilation, and planning on a hand-built floor plan.

Walks through the geometric core: rasterize a scene, inflate obstacles by
the agent radius, plan a path, and probe the range sensor. Prints ASCII
maps so no display is needed.
"""
import math

import numpy as np

from navbench.geometry import astar, dilate, geodesic_distance, ray_cast
from navbench.scene import ObjectSpec, Rect, RoomSpec, Scene, build_occupancy


def ascii_map(grid, path=None, markers=()):
    rows = []
    path_cells = set()
    if path is not None:
        path_cells = {grid.world_to_cell(p) for p in path.waypoints}
    marker_cells = {grid.world_to_cell(p): ch for p, ch in markers}
    for r in range(grid.height - 1, -1, -1):
        row = []
        for c in range(grid.width):
            if (r, c) in marker_cells:
                row.append(marker_cells[(r, c)])
            elif (r, c) in path_cells:
                row.append("*")
            else:
                row.append("#" if grid.cells[r, c] else ".")
        rows.append("".join(row))
    return "\n".join(rows)


def main():
    left = RoomSpec("left", "living room", Rect(0, 0, 5, 4),
                    door_segments=(((5.0, 1.4), (5.0, 2.6)),))
    right = RoomSpec("right", "kitchen", Rect(5, 0, 10, 4),
                     door_segments=(((5.0, 1.4), (5.0, 2.6)),))
    couch = ObjectSpec("couch_1", "couch", Rect(1.0, 2.8, 3.0, 3.6), 0.0, 0.85, "left")
    table = ObjectSpec("table_1", "table", Rect(6.5, 0.8, 7.7, 1.8), 0.0, 0.75, "right")
    scene = Scene("demo", Rect(0, 0, 10, 4), (left, right), (couch, table))

    grid = build_occupancy(scene, resolution=0.1, agent_height=1.5)
    print("Occupancy raster (0.1 m cells, # = occupied):")
    print(ascii_map(grid))

    nav = dilate(grid, 0.30)
    print("\nAfter dilating by the 0.30 m agent radius:")
    print(ascii_map(nav))

    start, goal = (1.0, 1.0), (9.0, 3.2)
    path = astar(nav, start, goal)
    print(f"\nA* path start={start} goal={goal}: "
          f"{len(path.waypoints)} waypoints, length {path.length:.2f} m")
    print(ascii_map(nav, path, markers=[(start, "S"), (goal, "G")]))

    print(f"\ngeodesic distance: {geodesic_distance(nav, start, goal):.2f} m "
          f"(euclidean {math.dist(start, goal):.2f} m)")

    print("\nRange scan from the start (12 bearings, 10 m clip):")
    for k in range(12):
        bearing = k * math.pi / 6
        r = ray_cast(grid, start, bearing, 10.0)
        print(f"  {math.degrees(bearing):5.0f} deg -> {r:5.2f} m")


if __name__ == "__main__":
    main()
