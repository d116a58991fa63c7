"""Seeded procedural indoor scene generator.

Produces rectangular rooms on a shared-wall layout (binary splits of the
boundary), carves doors along a random spanning tree of the room adjacency
graph, and furnishes rooms from a small object catalog. Every emitted scene
is validated: the occupancy grid dilated by the agent radius must form a
single free connected component that touches every room interior, so any
sampled free start/goal pair is plannable.

Identical (params, seed) always yields an identical Scene; all coordinates
are snapped to 0.01 m so serialized scenes are byte-stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from navbench.geometry import dilate, free_components
from navbench.scene import (
    HALLWAY,
    Disc,
    ObjectSpec,
    Rect,
    RoomSpec,
    Scene,
    build_occupancy,
)


class GenerationFailed(Exception):
    """Raised when no connected furnished layout is found within the retry
    budget."""


@dataclass(frozen=True)
class GeneratorParams:
    room_count: tuple[int, int] = (2, 8)
    bounds_width: tuple[float, float] = (8.0, 14.0)
    bounds_height: tuple[float, float] = (7.0, 12.0)
    object_density: tuple[float, float] = (0.04, 0.12)  # objects per m^2 of room
    min_room_side: float = 2.5
    door_width: tuple[float, float] = (1.0, 1.4)
    extra_door_prob: float = 0.25
    on_top_prob: float = 0.6
    wall_clearance: float = 0.15
    door_clearance: float = 0.9  # object-free depth in front of each door
    resolution: float = 0.05
    agent_radius: float = 0.30
    agent_height: float = 1.50
    max_attempts: int = 40
    room_labels: tuple[str, ...] = (
        "bedroom", "kitchen", "living room", "bathroom",
        "office", "dining room", "hallway", "study",
    )


# label -> (kind, size sampler params, top height, can support small items)
_FURNITURE = {
    "table": ("rect", (0.8, 1.4), (0.6, 1.0), 0.75, True),
    "desk": ("rect", (1.0, 1.4), (0.5, 0.7), 0.74, True),
    "chair": ("rect", (0.40, 0.50), (0.40, 0.50), 0.95, False),
    "couch": ("rect", (1.6, 2.1), (0.8, 0.95), 0.85, False),
    "bed": ("rect", (1.4, 1.8), (1.9, 2.1), 0.55, True),
    "cabinet": ("rect", (0.8, 1.2), (0.4, 0.6), 1.9, False),
    "bookshelf": ("rect", (0.7, 1.0), (0.25, 0.35), 1.8, False),
    "tv stand": ("rect", (1.0, 1.4), (0.35, 0.5), 0.5, True),
    "sink": ("rect", (0.5, 0.7), (0.4, 0.5), 0.9, True),
    "fridge": ("rect", (0.6, 0.8), (0.6, 0.7), 1.8, False),
    "plant": ("disc", (0.15, 0.30), None, 1.2, False),
    "floor lamp": ("disc", (0.12, 0.18), None, 1.6, False),
}

_SMALL_ITEMS = {
    "cup": ("disc", (0.04, 0.06), None, 0.10),
    "bowl": ("disc", (0.06, 0.10), None, 0.07),
    "vase": ("disc", (0.05, 0.09), None, 0.25),
    "book": ("rect", (0.15, 0.25), (0.12, 0.20), 0.03),
    "laptop": ("rect", (0.30, 0.35), (0.22, 0.26), 0.02),
    "mirror": ("rect", (0.25, 0.40), (0.08, 0.12), 0.50),
}

_ROOM_FURNITURE = {
    "bedroom": ("bed", "cabinet", "chair", "plant", "floor lamp", "bookshelf"),
    "kitchen": ("table", "chair", "sink", "fridge", "cabinet"),
    "living room": ("couch", "tv stand", "table", "plant", "bookshelf", "floor lamp"),
    "bathroom": ("sink", "cabinet", "plant"),
    "office": ("desk", "chair", "bookshelf", "cabinet", "floor lamp"),
    "study": ("desk", "chair", "bookshelf", "plant", "floor lamp"),
    "dining room": ("table", "chair", "cabinet", "plant"),
    "hallway": ("plant", "cabinet", "bookshelf"),
}


def _snap(v: float) -> float:
    return round(float(v), 2)


def _split_rooms(rng, bounds: Rect, target: int, min_side: float) -> list[Rect]:
    rooms = [bounds]
    while len(rooms) < target:
        # split the largest splittable room
        order = sorted(range(len(rooms)), key=lambda i: -rooms[i].area)
        split_done = False
        for i in order:
            r = rooms[i]
            horizontal = r.width >= r.height  # split the longer axis
            side = r.width if horizontal else r.height
            if side < 2 * min_side:
                continue
            pos = _snap(rng.uniform(min_side, side - min_side))
            if horizontal:
                cut = r.min_x + pos
                a = Rect(r.min_x, r.min_y, cut, r.max_y)
                b = Rect(cut, r.min_y, r.max_x, r.max_y)
            else:
                cut = r.min_y + pos
                a = Rect(r.min_x, r.min_y, r.max_x, cut)
                b = Rect(r.min_x, cut, r.max_x, r.max_y)
            rooms[i] = a
            rooms.append(b)
            split_done = True
            break
        if not split_done:
            break
    return rooms


def _shared_edges(rooms: list[Rect], min_overlap: float):
    """(i, j, axis, coord, lo, hi) for each wall shared by two rooms."""
    edges = []
    for i in range(len(rooms)):
        for j in range(i + 1, len(rooms)):
            a, b = rooms[i], rooms[j]
            for coord_a, coord_b, axis in ((a.max_x, b.min_x, "v"), (a.min_x, b.max_x, "v")):
                if abs(coord_a - coord_b) <= 1e-9:
                    lo = max(a.min_y, b.min_y)
                    hi = min(a.max_y, b.max_y)
                    if hi - lo >= min_overlap:
                        edges.append((i, j, "v", coord_a, lo, hi))
            for coord_a, coord_b in ((a.max_y, b.min_y), (a.min_y, b.max_y)):
                if abs(coord_a - coord_b) <= 1e-9:
                    lo = max(a.min_x, b.min_x)
                    hi = min(a.max_x, b.max_x)
                    if hi - lo >= min_overlap:
                        edges.append((i, j, "h", coord_a, lo, hi))
    return edges


def _spanning_doors(rng, n_rooms: int, edges, extra_prob: float):
    order = list(range(len(edges)))
    rng.shuffle(order)
    parent = list(range(n_rooms))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for k in order:
        i, j = edges[k][0], edges[k][1]
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            chosen.append(k)
    if len(chosen) < n_rooms - 1:
        return None  # adjacency graph disconnected; layout unusable
    for k in order:
        if k not in chosen and rng.random() < extra_prob:
            chosen.append(k)
    return chosen


def _carve_door(rng, edge, params) -> tuple:
    _, _, axis, coord, lo, hi = edge
    usable_lo, usable_hi = lo + 0.2, hi - 0.2
    width = min(rng.uniform(*params.door_width), usable_hi - usable_lo)
    start = _snap(rng.uniform(usable_lo, usable_hi - width))
    end = _snap(start + width)
    if axis == "v":
        return ((coord, start), (coord, end))
    return ((start, coord), (end, coord))


def _door_keepout(edge, depth: float) -> Rect:
    (x0, y0), (x1, y1) = edge
    if abs(x0 - x1) <= 1e-9:  # vertical door
        lo, hi = sorted([y0, y1])
        return Rect(x0 - depth, lo - 0.2, x0 + depth, hi + 0.2)
    lo, hi = sorted([x0, x1])
    return Rect(lo - 0.2, y0 - depth, hi + 0.2, y0 + depth)


def _furnish_room(rng, room: RoomSpec, keepouts: list[Rect], params,
                  taken: list, counters: dict) -> list[ObjectSpec]:
    fp = room.footprint
    density = rng.uniform(*params.object_density)
    want = int(np.clip(round(fp.area * density), 1, 6))
    pool = _ROOM_FURNITURE.get(room.label, tuple(_FURNITURE))
    placed = []
    for _ in range(want):
        label = pool[int(rng.integers(len(pool)))]
        kind, wa, wb, top, supports = _FURNITURE[label]
        for _try in range(20):
            if kind == "rect":
                w = _snap(rng.uniform(*wa))
                d = _snap(rng.uniform(*wb))
                half_w, half_d = w / 2, d / 2
            else:
                r = _snap(rng.uniform(*wa))
                half_w = half_d = r
            lo_x = fp.min_x + params.wall_clearance + half_w
            hi_x = fp.max_x - params.wall_clearance - half_w
            lo_y = fp.min_y + params.wall_clearance + half_d
            hi_y = fp.max_y - params.wall_clearance - half_d
            if lo_x >= hi_x or lo_y >= hi_y:
                break
            cx = _snap(rng.uniform(lo_x, hi_x))
            cy = _snap(rng.uniform(lo_y, hi_y))
            if kind == "rect":
                foot = Rect(_snap(cx - half_w), _snap(cy - half_d),
                            _snap(cx + half_w), _snap(cy + half_d))
                bbox = foot
            else:
                foot = Disc(cx, cy, r)
                bbox = foot.bounding_rect()
            inflated = bbox.inflate(0.05)
            if any(_rects_overlap(inflated, k) for k in keepouts):
                continue
            if any(_rects_overlap(inflated, t) for t in taken):
                continue
            counters[label] = counters.get(label, 0) + 1
            oid = f"{label.replace(' ', '_')}_{counters[label]}"
            placed.append(ObjectSpec(oid, label, foot, 0.0, top, room.room_id, True))
            taken.append(bbox)
            break
    # occasional ceiling fixture above the agent's head
    if rng.random() < 0.3:
        cx = _snap(rng.uniform(fp.min_x + 0.5, fp.max_x - 0.5))
        cy = _snap(rng.uniform(fp.min_y + 0.5, fp.max_y - 0.5))
        counters["ceiling lamp"] = counters.get("ceiling lamp", 0) + 1
        placed.append(ObjectSpec(f"ceiling_lamp_{counters['ceiling lamp']}",
                                 "ceiling lamp", Disc(cx, cy, 0.2), 2.2, 2.4,
                                 room.room_id, True))
    return placed


def _rects_overlap(a: Rect, b: Rect) -> bool:
    return not (a.max_x <= b.min_x or b.max_x <= a.min_x
                or a.max_y <= b.min_y or b.max_y <= a.min_y)


def _place_on_top(rng, support: ObjectSpec, counters: dict) -> ObjectSpec | None:
    label = list(_SMALL_ITEMS)[int(rng.integers(len(_SMALL_ITEMS)))]
    kind, wa, wb, h = _SMALL_ITEMS[label]
    sfp = support.footprint
    if isinstance(sfp, Disc):
        return None
    if kind == "rect":
        w = _snap(rng.uniform(*wa))
        d = _snap(rng.uniform(*wb))
        half_w, half_d = w / 2, d / 2
    else:
        r = _snap(rng.uniform(*wa))
        half_w = half_d = r
    lo_x, hi_x = sfp.min_x + half_w + 0.02, sfp.max_x - half_w - 0.02
    lo_y, hi_y = sfp.min_y + half_d + 0.02, sfp.max_y - half_d - 0.02
    if lo_x >= hi_x or lo_y >= hi_y:
        return None
    cx = _snap(rng.uniform(lo_x, hi_x))
    cy = _snap(rng.uniform(lo_y, hi_y))
    if kind == "rect":
        foot = Rect(_snap(cx - half_w), _snap(cy - half_d),
                    _snap(cx + half_w), _snap(cy + half_d))
        if not sfp.contains_rect(foot, 1e-9):
            return None
    else:
        foot = Disc(cx, cy, r)
        if not sfp.contains_rect(foot.bounding_rect(), 1e-9):
            return None
    counters[label] = counters.get(label, 0) + 1
    oid = f"{label}_{counters[label]}"
    base = support.top_height
    return ObjectSpec(oid, label, foot, base, _snap(base + h),
                      support.room_id, False)


def _connected_and_roomy(scene: Scene, params: GeneratorParams) -> bool:
    grid = build_occupancy(scene, params.resolution, params.agent_height)
    nav = dilate(grid, params.agent_radius)
    labels, count = free_components(nav)
    if count != 1:
        return False
    free = ~nav.cells
    if free.sum() < 0.10 * nav.cells.size:
        return False
    res = nav.resolution
    for room in scene.rooms:
        fp = room.footprint.inflate(-(params.agent_radius + 2 * res))
        if fp.width <= 0 or fp.height <= 0:
            return False
        clo = int(math.floor((fp.min_x - nav.origin[0]) / res))
        chi = int(math.ceil((fp.max_x - nav.origin[0]) / res))
        rlo = int(math.floor((fp.min_y - nav.origin[1]) / res))
        rhi = int(math.ceil((fp.max_y - nav.origin[1]) / res))
        clo, chi = max(clo, 0), min(chi, nav.width)
        rlo, rhi = max(rlo, 0), min(rhi, nav.height)
        if not free[rlo:rhi, clo:chi].any():
            return False
    return True


def generate_scene(params: GeneratorParams, seed: int) -> Scene:
    """Generate a valid, fully connected furnished scene. Deterministic per
    (params, seed). Raises GenerationFailed after the retry budget."""
    rng = np.random.default_rng(seed)
    lo_rooms, hi_rooms = params.room_count
    for _attempt in range(params.max_attempts):
        width = _snap(rng.uniform(*params.bounds_width))
        height = _snap(rng.uniform(*params.bounds_height))
        bounds = Rect(0.0, 0.0, width, height)
        max_feasible = max(2, int(bounds.area / (params.min_room_side ** 2 * 1.6)))
        target = int(rng.integers(lo_rooms, hi_rooms + 1))
        target = min(target, max_feasible)
        rects = _split_rooms(rng, bounds, target, params.min_room_side)
        if len(rects) < max(2, lo_rooms):
            continue

        min_overlap = params.door_width[0] + 0.4
        edges = _shared_edges(rects, min_overlap)
        chosen = _spanning_doors(rng, len(rects), edges, params.extra_door_prob)
        if chosen is None:
            continue

        labels = list(params.room_labels)
        rng.shuffle(labels)
        room_labels = [labels[i % len(labels)] for i in range(len(rects))]
        doors_per_room = [[] for _ in rects]
        keepouts = []
        for k in chosen:
            seg = _carve_door(rng, edges[k], params)
            doors_per_room[edges[k][0]].append(seg)
            doors_per_room[edges[k][1]].append(seg)
            keepouts.append(_door_keepout(seg, params.door_clearance))

        rooms = tuple(
            RoomSpec(f"room_{i}", room_labels[i], rects[i], tuple(doors_per_room[i]))
            for i in range(len(rects))
        )

        counters: dict = {}
        taken: list[Rect] = []
        objects: list[ObjectSpec] = []
        for room in rooms:
            objects.extend(_furnish_room(rng, room, keepouts, params, taken, counters))
        for support in [o for o in objects if _FURNITURE.get(o.label, (None,) * 5)[4]]:
            if rng.random() < params.on_top_prob:
                item = _place_on_top(rng, support, counters)
                if item is not None:
                    objects.append(item)

        scene = Scene(f"scene-{seed:06d}", bounds, rooms, tuple(objects))
        scene.validate()
        if _connected_and_roomy(scene, params):
            return scene
    raise GenerationFailed(
        f"no connected layout for seed {seed} within {params.max_attempts} attempts")
