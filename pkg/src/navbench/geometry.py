"""Deterministic 2D metric geometry on occupancy rasters.

Provides the navigation ground primitives: boolean occupancy grids with
world/cell coordinate conversions, Euclidean obstacle dilation, 8-connected
A* planning without corner cutting, geodesic distances and distance fields,
grid ray casting, and nearest-free-point queries.

All functions are pure and operate on immutable inputs; they are safe to
call from any number of concurrent workers.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_RESOLUTION = 0.05  # meters per cell; fine enough for a 0.30 m agent radius

_SQRT2 = math.sqrt(2.0)
# Slack for boundary comparisons so radii that are exact multiples of the
# resolution include their boundary ring despite float rounding.
_EPS = 1e-9

# 8-neighborhood: (drow, dcol, is_diagonal)
_NEIGHBORS = (
    (-1, 0, False), (1, 0, False), (0, -1, False), (0, 1, False),
    (-1, -1, True), (-1, 1, True), (1, -1, True), (1, 1, True),
)


@dataclass(frozen=True)
class OccupancyGrid:
    """Metric 2D raster of free/occupied space.

    ``cells[row, col]`` is True where occupied. ``origin`` is the world
    coordinate of the corner of cell (0, 0); rows advance along +y and
    columns along +x.
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValueError("cells must be a 2D raster with width, height >= 1")
        cells = np.ascontiguousarray(cells)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def world_to_cell(self, p) -> tuple[int, int]:
        """Map a world point to (row, col); may be out of bounds."""
        col = int(math.floor((p[0] - self.origin[0]) / self.resolution))
        row = int(math.floor((p[1] - self.origin[1]) / self.resolution))
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def cell_in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def point_in_bounds(self, p) -> bool:
        return self.cell_in_bounds(*self.world_to_cell(p))

    def is_occupied(self, p) -> bool:
        """True if p falls in an occupied or out-of-bounds cell."""
        row, col = self.world_to_cell(p)
        if not self.cell_in_bounds(row, col):
            return True
        return bool(self.cells[row, col])

    def free_cell_count(self) -> int:
        return int((~self.cells).sum())

    def occupied_cell_centers(self) -> np.ndarray:
        """(N, 2) array of world centers of occupied cells."""
        rows, cols = np.nonzero(self.cells)
        x = self.origin[0] + (cols + 0.5) * self.resolution
        y = self.origin[1] + (rows + 0.5) * self.resolution
        return np.column_stack([x, y])


@dataclass(frozen=True)
class PlannedPath:
    """8-connected grid path as a world polyline.

    Interior waypoints are cell centers of consecutive 8-neighbor cells; the
    first and last entries are the exact query start/goal points.
    ``straight_steps``/``diagonal_steps`` count the grid moves, so the exact
    grid cost is ``(straight + diagonal*sqrt(2)) * resolution``.
    """

    waypoints: np.ndarray
    length: float
    straight_steps: int = 0
    diagonal_steps: int = 0

    def __post_init__(self):
        wp = np.ascontiguousarray(np.asarray(self.waypoints, dtype=float))
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    def grid_cost(self, resolution: float) -> float:
        return (self.straight_steps + self.diagonal_steps * _SQRT2) * resolution


def polyline_length(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    return float(np.hypot(*(np.diff(points, axis=0).T)).sum())


def dilate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Inflate occupied cells by a metric radius (cell-center distance).

    An output cell is occupied iff some input occupied cell center lies
    within ``radius`` of the output cell center. radius = 0 returns an
    identical grid.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0 or not grid.cells.any():
        return OccupancyGrid(grid.resolution, grid.origin, grid.cells.copy())
    # Exact Euclidean distance (in cells) from every cell center to the
    # nearest occupied cell center, via the exact EDT of the free mask.
    dist_cells = ndimage.distance_transform_edt(~grid.cells)
    r_cells_sq = (radius / grid.resolution) ** 2 * (1.0 + _EPS) + _EPS
    out = dist_cells * dist_cells <= r_cells_sq
    return OccupancyGrid(grid.resolution, grid.origin, out)


def _extract_path(grid, parent, start, goal, goal_cell):
    cells = []
    cur = goal_cell
    while cur != -1:
        cells.append(cur)
        cur = parent[cur]
    cells.reverse()
    w = grid.width
    # Exact query points are attached to the full center chain (deduped when
    # they coincide with a center), so the polyline length equals
    # |start-c0| + grid cost + |ck-goal| independent of tie-broken cell
    # choices; this keeps geodesic distances symmetric.
    pts = [tuple(map(float, start))]
    for ci in cells:
        center = grid.cell_center(ci // w, ci % w)
        if center != pts[-1]:
            pts.append(center)
    goal_pt = tuple(map(float, goal))
    if goal_pt != pts[-1]:
        pts.append(goal_pt)
    return np.array(pts, dtype=float)


def astar(grid: OccupancyGrid, start, goal) -> PlannedPath | None:
    """Minimum-cost 8-connected path over free cells, or None when no path.

    Straight moves cost ``resolution``, diagonals ``resolution*sqrt(2)``;
    diagonal motion through two orthogonally-adjacent occupied cells is
    forbidden. Open-set ties break by (row, col) for determinism.
    """
    res = grid.resolution
    cells = grid.cells
    h, w = cells.shape
    sr, sc = grid.world_to_cell(start)
    gr, gc = grid.world_to_cell(goal)
    if not grid.cell_in_bounds(sr, sc) or not grid.cell_in_bounds(gr, gc):
        raise ValueError("start and goal must map to in-bounds cells")
    if cells[sr, sc] or cells[gr, gc]:
        return None
    if (sr, sc) == (gr, gc):
        if tuple(map(float, start)) == tuple(map(float, goal)):
            wp = np.array([start], dtype=float)
        else:
            wp = np.array([start, goal], dtype=float)
        return PlannedPath(wp, polyline_length(wp), 0, 0)

    n = h * w
    start_i = sr * w + sc
    goal_i = gr * w + gc
    straight = np.full(n, -1, dtype=np.int32)
    diag = np.zeros(n, dtype=np.int32)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=bool)
    straight[start_i] = 0

    def hcost(r, c):
        dr = abs(r - gr)
        dc = abs(c - gc)
        return (max(dr, dc) + (_SQRT2 - 1.0) * min(dr, dc)) * res

    def gcost(i):
        return (straight[i] + diag[i] * _SQRT2) * res

    heap = [(hcost(sr, sc), sr, sc)]
    while heap:
        f, r, c = heapq.heappop(heap)
        i = r * w + c
        if closed[i]:
            continue
        closed[i] = True
        if i == goal_i:
            wp = _extract_path(grid, parent, start, goal, goal_i)
            return PlannedPath(wp, polyline_length(wp), int(straight[goal_i]), int(diag[goal_i]))
        g_s = straight[i]
        g_d = diag[i]
        for dr, dc, is_diag in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w):
                continue
            ni = nr * w + nc
            if cells[nr, nc] or closed[ni]:
                continue
            if is_diag and (cells[r, nc] or cells[nr, c]):
                continue  # no corner cutting
            ns = g_s + (0 if is_diag else 1)
            nd = g_d + (1 if is_diag else 0)
            ng = (ns + nd * _SQRT2) * res
            if straight[ni] >= 0 and ng >= gcost(ni):
                continue
            straight[ni] = ns
            diag[ni] = nd
            parent[ni] = i
            heapq.heappush(heap, (ng + hcost(nr, nc), nr, nc))
    return None


def geodesic_distance(grid: OccupancyGrid, a, b) -> float:
    """Shortest traversable path length between two points, math.inf when
    unreachable. Symmetric in (a, b) within float tolerance."""
    path = astar(grid, a, b)
    if path is None:
        return math.inf
    return path.length


def distance_field(grid: OccupancyGrid, source) -> np.ndarray:
    """Geodesic distance (meters) from every cell center to ``source``'s cell.

    Uses the same move costs and corner-cut rule as astar. Occupied or
    unreachable cells hold inf. Distances are cell-center quantized.
    """
    res = grid.resolution
    cells = grid.cells
    h, w = cells.shape
    sr, sc = grid.world_to_cell(source)
    if not grid.cell_in_bounds(sr, sc):
        raise ValueError("source must be in bounds")
    dist = np.full((h, w), np.inf)
    if cells[sr, sc]:
        return dist
    dist[sr, sc] = 0.0
    heap = [(0.0, sr, sc)]
    done = np.zeros((h, w), dtype=bool)
    while heap:
        d, r, c = heapq.heappop(heap)
        if done[r, c]:
            continue
        done[r, c] = True
        for dr, dc, is_diag in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w):
                continue
            if cells[nr, nc] or done[nr, nc]:
                continue
            if is_diag and (cells[r, nc] or cells[nr, c]):
                continue
            nd = d + (res * _SQRT2 if is_diag else res)
            if nd < dist[nr, nc]:
                dist[nr, nc] = nd
                heapq.heappush(heap, (nd, nr, nc))
    return dist


def ray_cast(grid: OccupancyGrid, origin, bearing: float, max_range: float = 10.0,
             ignore: np.ndarray | None = None) -> float:
    """Distance to the first occupied-cell boundary along a ray, clamped to
    ``max_range``. Leaving the raster counts as hitting occupied space.

    ``ignore`` is an optional boolean mask of cells treated as free (used by
    the detection sensor to skip an object's own footprint).
    """
    if max_range <= 0:
        raise ValueError("max_range must be > 0")
    row, col = grid.world_to_cell(origin)
    if not grid.cell_in_bounds(row, col):
        raise ValueError("origin must be in bounds")
    cells = grid.cells
    h, w = cells.shape

    def occupied(r, c):
        if cells[r, c] and (ignore is None or not ignore[r, c]):
            return True
        return False

    if occupied(row, col):
        return 0.0
    res = grid.resolution
    x, y = float(origin[0]), float(origin[1])
    dx, dy = math.cos(bearing), math.sin(bearing)
    x0 = grid.origin[0] + col * res
    y0 = grid.origin[1] + row * res
    if dx > 0:
        step_c, t_max_x, t_dx = 1, (x0 + res - x) / dx, res / dx
    elif dx < 0:
        step_c, t_max_x, t_dx = -1, (x0 - x) / dx, -res / dx
    else:
        step_c, t_max_x, t_dx = 0, math.inf, math.inf
    if dy > 0:
        step_r, t_max_y, t_dy = 1, (y0 + res - y) / dy, res / dy
    elif dy < 0:
        step_r, t_max_y, t_dy = -1, (y0 - y) / dy, -res / dy
    else:
        step_r, t_max_y, t_dy = 0, math.inf, math.inf

    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            t_max_x += t_dx
            col += step_c
        else:
            t = t_max_y
            t_max_y += t_dy
            row += step_r
        if t >= max_range:
            return float(max_range)
        if not (0 <= row < h and 0 <= col < w):
            return float(min(t, max_range))
        if occupied(row, col):
            return float(t)


def nearest_free_point(grid: OccupancyGrid, p) -> tuple[float, float]:
    """Center of the free cell nearest (Euclidean) to p; ties break by
    (row, col) order."""
    cells = grid.cells
    if cells.all():
        raise ValueError("grid has no free cell")
    res = grid.resolution
    cx = grid.origin[0] + (np.arange(grid.width) + 0.5) * res
    cy = grid.origin[1] + (np.arange(grid.height) + 0.5) * res
    d2 = (cx[None, :] - float(p[0])) ** 2 + (cy[:, None] - float(p[1])) ** 2
    d2[cells] = np.inf
    idx = int(np.argmin(d2))  # first minimum in row-major order: (row, col) ties
    row, col = divmod(idx, grid.width)
    return grid.cell_center(row, col)


def free_components(grid: OccupancyGrid) -> tuple[np.ndarray, int]:
    """Label 4-connected free components (traversability classes for
    corner-cut-free planning). Returns (labels, count); 0 marks occupied."""
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    labels, count = ndimage.label(~grid.cells, structure=structure)
    return labels, int(count)
