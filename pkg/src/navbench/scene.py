"""Declarative 2D scene model with per-object height intervals.

A Scene is a set of rectangular rooms (walls with door openings) and
objects (rect or disc footprints) inside an axis-aligned boundary. It is
the single source for both the occupancy raster (walls + obstacles that
overlap the agent's height band) and the spatial-semantic scene graph
(ON / NEAR / IN relations).

Scenes are immutable after construction and serialize to a stable JSON
schema (all lengths in meters).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from navbench.geometry import OccupancyGrid

HALLWAY = "none"  # room_id for objects not assigned to a room

# Scene-graph thresholds (meters); furniture-scale defaults, configurable
# via build_scene_graph arguments.
NEAR_DISTANCE = 1.5
ON_TOLERANCE = 0.05

DEFAULT_AGENT_HEIGHT = 1.50
DEFAULT_AGENT_DIAMETER = 0.60

_TOL = 1e-9


class SceneError(Exception):
    pass


class ParseError(SceneError):
    """Raised when a scene file is malformed (bad JSON or schema)."""


class InvariantViolation(SceneError):
    """Raised when a structurally valid scene breaks a model invariant."""


@dataclass(frozen=True)
class Rect:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)

    def contains_point(self, p, tol: float = _TOL) -> bool:
        return (self.min_x - tol <= p[0] <= self.max_x + tol
                and self.min_y - tol <= p[1] <= self.max_y + tol)

    def contains_rect(self, other: "Rect", tol: float = _TOL) -> bool:
        return (other.min_x >= self.min_x - tol and other.max_x <= self.max_x + tol
                and other.min_y >= self.min_y - tol and other.max_y <= self.max_y + tol)

    def inflate(self, margin: float) -> "Rect":
        return Rect(self.min_x - margin, self.min_y - margin,
                    self.max_x + margin, self.max_y + margin)

    def distance_to_point(self, p) -> float:
        dx = max(self.min_x - p[0], 0.0, p[0] - self.max_x)
        dy = max(self.min_y - p[1], 0.0, p[1] - self.max_y)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    radius: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def bounding_rect(self) -> Rect:
        return Rect(self.cx - self.radius, self.cy - self.radius,
                    self.cx + self.radius, self.cy + self.radius)


Footprint = Rect | Disc


def footprint_center(fp: Footprint) -> tuple[float, float]:
    return fp.center


def footprint_within(bounds: Rect, fp: Footprint, tol: float = _TOL) -> bool:
    if isinstance(fp, Disc):
        fp = fp.bounding_rect()
    return bounds.contains_rect(fp, tol)


def footprint_contains(outer: Footprint, inner: Footprint, margin: float = 0.0,
                       tol: float = _TOL) -> bool:
    """True when ``inner`` lies within ``outer`` inflated by ``margin``."""
    if isinstance(outer, Rect):
        big = outer.inflate(margin)
        if isinstance(inner, Rect):
            return big.contains_rect(inner, tol)
        return big.contains_rect(inner.bounding_rect(), tol)
    # outer disc
    r = outer.radius + margin
    if isinstance(inner, Disc):
        d = math.hypot(inner.cx - outer.cx, inner.cy - outer.cy)
        return d + inner.radius <= r + tol
    corners = [(inner.min_x, inner.min_y), (inner.min_x, inner.max_y),
               (inner.max_x, inner.min_y), (inner.max_x, inner.max_y)]
    return all(math.hypot(x - outer.cx, y - outer.cy) <= r + tol for x, y in corners)


@dataclass(frozen=True)
class RoomSpec:
    room_id: str
    label: str
    footprint: Rect
    door_segments: tuple = ()  # ((x0, y0), (x1, y1)) openings on the boundary


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    label: str
    footprint: Footprint
    base_height: float
    top_height: float
    room_id: str = HALLWAY
    is_obstacle: bool = True

    def blocks_at_height(self, agent_height: float) -> bool:
        # contributes to occupancy iff an obstacle whose vertical extent
        # overlaps [0, agent_height)
        return self.is_obstacle and self.base_height < agent_height


@dataclass(frozen=True)
class Scene:
    scene_id: str
    bounds: Rect
    rooms: tuple = ()
    objects: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "objects", tuple(self.objects))

    def room(self, room_id: str) -> RoomSpec:
        for r in self.rooms:
            if r.room_id == room_id:
                return r
        raise KeyError(room_id)

    def object(self, object_id: str) -> ObjectSpec:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    def validate(self, agent_diameter: float = DEFAULT_AGENT_DIAMETER) -> None:
        """Raise InvariantViolation naming the first violated invariant."""
        if not self.scene_id:
            raise InvariantViolation("scene_id must be non-empty")
        if self.bounds.width <= 0 or self.bounds.height <= 0:
            raise InvariantViolation("bounds must have positive area")
        room_ids = [r.room_id for r in self.rooms]
        if len(set(room_ids)) != len(room_ids):
            raise InvariantViolation("duplicate room_id")
        for r in self.rooms:
            if r.footprint.area <= 0:
                raise InvariantViolation(f"room {r.room_id!r} footprint area must be > 0")
            if not self.bounds.contains_rect(r.footprint, 1e-6):
                raise InvariantViolation(f"room {r.room_id!r} footprint outside bounds")
            for seg in r.door_segments:
                _validate_door(r, seg, agent_diameter)
        obj_ids = [o.object_id for o in self.objects]
        dup = {i for i in obj_ids if obj_ids.count(i) > 1}
        if dup:
            raise InvariantViolation(f"duplicate object_id {sorted(dup)[0]!r}")
        known = set(room_ids) | {HALLWAY}
        for o in self.objects:
            if o.room_id not in known:
                raise InvariantViolation(
                    f"object {o.object_id!r} references unknown room {o.room_id!r}")
            if not footprint_within(self.bounds, o.footprint, 1e-6):
                raise InvariantViolation(f"object {o.object_id!r} footprint outside bounds")
            if not (o.top_height >= o.base_height >= 0):
                raise InvariantViolation(
                    f"object {o.object_id!r} must satisfy top_height >= base_height >= 0")


def _validate_door(room: RoomSpec, seg, agent_diameter: float) -> None:
    (x0, y0), (x1, y1) = seg
    fp = room.footprint
    width = math.hypot(x1 - x0, y1 - y0)
    if width + 1e-9 < agent_diameter:
        raise InvariantViolation(
            f"door on room {room.room_id!r} narrower than agent diameter")
    vertical = abs(x0 - x1) <= 1e-6
    horizontal = abs(y0 - y1) <= 1e-6
    on_boundary = False
    if vertical and (abs(x0 - fp.min_x) <= 1e-6 or abs(x0 - fp.max_x) <= 1e-6):
        lo, hi = sorted([y0, y1])
        on_boundary = lo >= fp.min_y - 1e-6 and hi <= fp.max_y + 1e-6
    elif horizontal and (abs(y0 - fp.min_y) <= 1e-6 or abs(y0 - fp.max_y) <= 1e-6):
        lo, hi = sorted([x0, x1])
        on_boundary = lo >= fp.min_x - 1e-6 and hi <= fp.max_x + 1e-6
    if not on_boundary:
        raise InvariantViolation(
            f"door on room {room.room_id!r} does not lie on the footprint boundary")


# ---------------------------------------------------------------------------
# Occupancy rasterization
# ---------------------------------------------------------------------------

def _cover_cols(grid_origin: float, res: float, n: int, lo_w: float, hi_w: float):
    """Cell index range covering world interval [lo_w, hi_w] with positive
    overlap; degenerate intervals cover exactly one cell. Clamped in-bounds."""
    lo = int(math.floor((lo_w - grid_origin) / res + 1e-9))
    hi = int(math.ceil((hi_w - grid_origin) / res - 1e-9)) - 1
    if hi < lo:
        hi = lo
    return max(lo, 0), min(hi, n - 1)


def build_occupancy(scene: Scene, resolution: float,
                    agent_height: float = DEFAULT_AGENT_HEIGHT) -> OccupancyGrid:
    """Rasterize walls (room boundaries minus door openings, one cell thick)
    and height-relevant obstacle objects. Cells straddling the scene bounds
    are occupied (the outside world is solid)."""
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    b = scene.bounds
    width = max(1, int(math.ceil(b.width / resolution - 1e-9)))
    height = max(1, int(math.ceil(b.height / resolution - 1e-9)))
    cells = np.zeros((height, width), dtype=bool)
    ox, oy = b.min_x, b.min_y

    # partial cells beyond the bounds edge are solid
    if ox + width * resolution > b.max_x + 1e-9:
        cells[:, width - 1] = True
    if oy + height * resolution > b.max_y + 1e-9:
        cells[height - 1, :] = True

    for room in scene.rooms:
        _rasterize_room_walls(cells, ox, oy, resolution, room)

    for obj in scene.objects:
        if obj.blocks_at_height(agent_height):
            _rasterize_footprint(cells, ox, oy, resolution, obj.footprint)

    return OccupancyGrid(resolution, (ox, oy), cells)


def _rasterize_room_walls(cells, ox, oy, res, room: RoomSpec):
    h, w = cells.shape
    fp = room.footprint
    clo, chi = _cover_cols(ox, res, w, fp.min_x, fp.max_x)
    rlo, rhi = _cover_cols(oy, res, h, fp.min_y, fp.max_y)
    wall = np.zeros_like(cells)
    wall[rlo, clo:chi + 1] = True
    wall[rhi, clo:chi + 1] = True
    wall[rlo:rhi + 1, clo] = True
    wall[rlo:rhi + 1, chi] = True

    for (x0, y0), (x1, y1) in room.door_segments:
        if abs(x0 - x1) <= 1e-6:  # vertical edge door
            col = clo if abs(x0 - fp.min_x) <= 1e-6 else chi
            lo_w, hi_w = sorted([y0, y1])
            # clear cells whose y-span lies fully within the opening
            for r in range(rlo, rhi + 1):
                if oy + r * res >= lo_w - 1e-9 and oy + (r + 1) * res <= hi_w + 1e-9:
                    wall[r, col] = False
        else:  # horizontal edge door
            row = rlo if abs(y0 - fp.min_y) <= 1e-6 else rhi
            lo_w, hi_w = sorted([x0, x1])
            for c in range(clo, chi + 1):
                if ox + c * res >= lo_w - 1e-9 and ox + (c + 1) * res <= hi_w + 1e-9:
                    wall[row, c] = False
    cells |= wall


def _rasterize_footprint(cells, ox, oy, res, fp: Footprint):
    h, w = cells.shape
    if isinstance(fp, Rect):
        clo, chi = _cover_cols(ox, res, w, fp.min_x, fp.max_x)
        rlo, rhi = _cover_cols(oy, res, h, fp.min_y, fp.max_y)
        cells[rlo:rhi + 1, clo:chi + 1] = True
        return
    bb = fp.bounding_rect()
    clo, chi = _cover_cols(ox, res, w, bb.min_x, bb.max_x)
    rlo, rhi = _cover_cols(oy, res, h, bb.min_y, bb.max_y)
    cols = np.arange(clo, chi + 1)
    rows = np.arange(rlo, rhi + 1)
    x0s = ox + cols * res
    y0s = oy + rows * res
    # distance from disc center to each cell rectangle (clamped axis gaps)
    dx = np.maximum(np.maximum(x0s - fp.cx, fp.cx - (x0s + res)), 0.0)
    dy = np.maximum(np.maximum(y0s - fp.cy, fp.cy - (y0s + res)), 0.0)
    d2 = dx[None, :] ** 2 + dy[:, None] ** 2
    cells[rlo:rhi + 1, clo:chi + 1] |= d2 < fp.radius ** 2 - 1e-12


def rasterize_footprint_mask(grid: OccupancyGrid, fp: Footprint) -> np.ndarray:
    """Boolean mask of the grid cells a footprint covers."""
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    _rasterize_footprint(mask, grid.origin[0], grid.origin[1], grid.resolution, fp)
    return mask


# ---------------------------------------------------------------------------
# Scene graph
# ---------------------------------------------------------------------------

ON = "ON"
NEAR = "NEAR"
IN = "IN"


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple
    edges: tuple  # (subject_id, relation, object_id), sorted

    def edges_of(self, subject_id: str) -> tuple:
        return tuple(e for e in self.edges if e[0] == subject_id)

    def strongest_relation(self, subject_id: str):
        """Most specific relation for an object: ON, then NEAR, then IN."""
        for rel in (ON, NEAR, IN):
            for e in self.edges_of(subject_id):
                if e[1] == rel:
                    return e
        return None

    @staticmethod
    def edge_id(edge) -> str:
        return "|".join(edge)


def supports_of(scene: Scene, obj: ObjectSpec, tolerance: float = ON_TOLERANCE) -> list:
    """Objects that ``obj`` rests on (the ON predicate support side)."""
    out = []
    for other in scene.objects:
        if other.object_id == obj.object_id:
            continue
        if (footprint_contains(other.footprint, obj.footprint, tolerance)
                and abs(obj.base_height - other.top_height) <= tolerance + 1e-9):
            out.append(other)
    return out


def build_scene_graph(scene: Scene, near_distance: float = NEAR_DISTANCE,
                      on_tolerance: float = ON_TOLERANCE) -> SceneGraph:
    """Emit exactly the ON/NEAR/IN edges whose predicates hold, sorted by
    (subject, relation, object) for determinism."""
    edges = set()
    objs = scene.objects
    for a in objs:
        for b in objs:
            if a.object_id == b.object_id:
                continue
            if (footprint_contains(b.footprint, a.footprint, on_tolerance)
                    and abs(a.base_height - b.top_height) <= on_tolerance + 1e-9):
                edges.add((a.object_id, ON, b.object_id))
            ca, cb = footprint_center(a.footprint), footprint_center(b.footprint)
            if (a.room_id == b.room_id
                    and math.hypot(ca[0] - cb[0], ca[1] - cb[1]) <= near_distance + 1e-9):
                edges.add((a.object_id, NEAR, b.object_id))
        for room in scene.rooms:
            if room.footprint.contains_point(footprint_center(a.footprint)):
                edges.add((a.object_id, IN, room.room_id))
    nodes = tuple(sorted([o.object_id for o in objs] + [r.room_id for r in scene.rooms]))
    return SceneGraph(nodes, tuple(sorted(edges)))


# ---------------------------------------------------------------------------
# Serialization (stable JSON schema)
# ---------------------------------------------------------------------------

def _rect_to_json(r: Rect) -> dict:
    return {"min": [r.min_x, r.min_y], "max": [r.max_x, r.max_y]}


def _footprint_to_json(fp: Footprint) -> dict:
    if isinstance(fp, Rect):
        return {"kind": "rect", "min": [fp.min_x, fp.min_y], "max": [fp.max_x, fp.max_y]}
    return {"kind": "disc", "center": [fp.cx, fp.cy], "radius": fp.radius}


def scene_to_dict(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "bounds": _rect_to_json(scene.bounds),
        "rooms": [
            {
                "room_id": r.room_id,
                "label": r.label,
                "footprint": _rect_to_json(r.footprint),
                "doors": [[[p0[0], p0[1]], [p1[0], p1[1]]] for p0, p1 in r.door_segments],
            }
            for r in scene.rooms
        ],
        "objects": [
            {
                "object_id": o.object_id,
                "label": o.label,
                "footprint": _footprint_to_json(o.footprint),
                "base_height": o.base_height,
                "top_height": o.top_height,
                "room_id": o.room_id,
                "is_obstacle": o.is_obstacle,
            }
            for o in scene.objects
        ],
    }


class _SchemaReader:
    """Walks a parsed JSON document, raising ParseError with field paths."""

    def __init__(self, doc):
        self.doc = doc

    @staticmethod
    def fail(path, why):
        raise ParseError(f"{path}: {why}")

    def obj(self, value, path):
        if not isinstance(value, dict):
            self.fail(path, "expected object")
        return value

    def lst(self, value, path):
        if not isinstance(value, list):
            self.fail(path, "expected array")
        return value

    def get(self, d, key, path):
        if key not in d:
            self.fail(path, f"missing field {key!r}")
        return d[key]

    def string(self, d, key, path):
        v = self.get(d, key, path)
        if not isinstance(v, str):
            self.fail(f"{path}.{key}", "expected string")
        return v

    def number(self, v, path):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(path, "expected finite number")
        return float(v)

    def point(self, v, path):
        v = self.lst(v, path)
        if len(v) != 2:
            self.fail(path, "expected [x, y]")
        return (self.number(v[0], path), self.number(v[1], path))

    def rect(self, d, path):
        d = self.obj(d, path)
        mn = self.point(self.get(d, "min", path), f"{path}.min")
        mx = self.point(self.get(d, "max", path), f"{path}.max")
        return Rect(mn[0], mn[1], mx[0], mx[1])

    def footprint(self, d, path):
        d = self.obj(d, path)
        kind = self.string(d, "kind", path)
        if kind == "rect":
            return self.rect(d, path)
        if kind == "disc":
            c = self.point(self.get(d, "center", path), f"{path}.center")
            r = self.number(self.get(d, "radius", path), f"{path}.radius")
            return Disc(c[0], c[1], r)
        self.fail(f"{path}.kind", f"unknown footprint kind {kind!r}")


def scene_from_dict(doc: dict) -> Scene:
    rd = _SchemaReader(doc)
    root = rd.obj(doc, "$")
    scene_id = rd.string(root, "scene_id", "$")
    bounds = rd.rect(rd.get(root, "bounds", "$"), "$.bounds")
    rooms = []
    for i, r in enumerate(rd.lst(rd.get(root, "rooms", "$"), "$.rooms")):
        path = f"$.rooms[{i}]"
        r = rd.obj(r, path)
        doors = []
        for j, seg in enumerate(rd.lst(r.get("doors", []), f"{path}.doors")):
            seg = rd.lst(seg, f"{path}.doors[{j}]")
            if len(seg) != 2:
                rd.fail(f"{path}.doors[{j}]", "expected [[x,y],[x,y]]")
            doors.append((rd.point(seg[0], f"{path}.doors[{j}][0]"),
                          rd.point(seg[1], f"{path}.doors[{j}][1]")))
        rooms.append(RoomSpec(
            room_id=rd.string(r, "room_id", path),
            label=rd.string(r, "label", path),
            footprint=rd.rect(rd.get(r, "footprint", path), f"{path}.footprint"),
            door_segments=tuple(doors),
        ))
    objects = []
    for i, o in enumerate(rd.lst(rd.get(root, "objects", "$"), "$.objects")):
        path = f"$.objects[{i}]"
        o = rd.obj(o, path)
        is_obstacle = o.get("is_obstacle", True)
        if not isinstance(is_obstacle, bool):
            rd.fail(f"{path}.is_obstacle", "expected boolean")
        objects.append(ObjectSpec(
            object_id=rd.string(o, "object_id", path),
            label=rd.string(o, "label", path),
            footprint=rd.footprint(rd.get(o, "footprint", path), f"{path}.footprint"),
            base_height=rd.number(rd.get(o, "base_height", path), f"{path}.base_height"),
            top_height=rd.number(rd.get(o, "top_height", path), f"{path}.top_height"),
            room_id=rd.string(o, "room_id", path),
            is_obstacle=is_obstacle,
        ))
    scene = Scene(scene_id, bounds, tuple(rooms), tuple(objects))
    scene.validate()
    return scene


def dumps_canonical(doc) -> str:
    """Stable JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_scene(scene: Scene, path) -> None:
    scene.validate()
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_canonical(scene_to_dict(scene)))


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno}, column {e.colno}: {e.msg}") from e
    return scene_from_dict(doc)
