"""Physics-aware episode execution.

A cylindrical agent (disc in the 2D plane) moves through a scene's
occupancy raster under a hybrid action space: discrete motion primitives,
continuous velocity commands, and (in Tel-Hop mode) waypoint teleports.
Motion integrates in fixed 0.05 s substeps; each substep sweeps the agent
disc against occupied cell rectangles, sliding along contacts when enabled.
A collision event is recorded when the displacement blocked within one
action reaches the collision threshold; in Strict mode that ends the
episode.

One Simulator instance owns one episode and is single-threaded; distinct
instances are independent.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from navbench.geometry import OccupancyGrid, dilate, nearest_free_point, ray_cast
from navbench.scene import Scene, build_occupancy, rasterize_footprint_mask, supports_of

STRICT = "strict"
TELHOP = "telhop"

FORWARD = "FORWARD"
TURN_LEFT = "TURN_LEFT"
TURN_RIGHT = "TURN_RIGHT"
STOP = "STOP"
PRIMITIVES = (FORWARD, TURN_LEFT, TURN_RIGHT, STOP)

# Primitive magnitudes (paper-silent; common continuous-control convention)
FORWARD_DISTANCE = 0.25  # meters
TURN_ANGLE = math.pi / 12  # 15 degrees

_SKIN = 1e-6  # contact offset keeping the disc strictly outside obstacles


class SimulatorError(Exception):
    pass


class InvalidEpisode(SimulatorError):
    pass


class UnsupportedAction(SimulatorError):
    pass


class EpisodeFinished(SimulatorError):
    pass


def normalize_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a < 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class AgentBody:
    radius: float = 0.30
    height: float = 1.50
    max_linear_speed: float = 1.0
    max_angular_speed: float = math.pi / 2

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("agent radius and height must be > 0")
        if self.max_linear_speed <= 0 or self.max_angular_speed <= 0:
            raise ValueError("agent speed limits must be > 0")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError("pose coordinates must be finite")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Discrete:
    primitive: str

    def __post_init__(self):
        if self.primitive not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.primitive!r}")


@dataclass(frozen=True)
class Continuous:
    v: float
    omega: float
    dt: float


@dataclass(frozen=True)
class WaypointHop:
    target: tuple[float, float]


@dataclass(frozen=True)
class OracleQuery:
    text: str


Action = Discrete | Continuous | WaypointHop | OracleQuery


@dataclass(frozen=True)
class SimConfig:
    mode: str = STRICT
    allow_sliding: bool = True
    collision_thresh: float = 0.10
    max_steps: int = 200
    success_thresh: float = 3.0
    substep: float = 0.05
    resolution: float = 0.05
    scan_max_range: float = 10.0
    scan_bearing_count: int = 12  # panoramic rig, 30 degree spacing
    agent: AgentBody = field(default_factory=AgentBody)

    def __post_init__(self):
        if self.mode not in (STRICT, TELHOP):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.collision_thresh <= 0:
            raise ValueError("collision_thresh must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.substep <= 0:
            raise ValueError("substep must be > 0")


@dataclass(frozen=True)
class Detection:
    object_id: str
    label: str
    bearing: float  # relative to agent yaw, [-pi, pi)
    range: float


@dataclass(frozen=True)
class Observation:
    pose: Pose
    range_scan: tuple  # ((relative bearing, range), ...) over 12 bearings
    detections: tuple  # (Detection, ...)
    step_index: int
    collided_last_step: bool


@dataclass(frozen=True)
class CollisionEvent:
    t: float
    contact_point: tuple[float, float]
    blocked_displacement: float


@dataclass
class Trajectory:
    """Pose log at exactly one sample per 0.05 s of simulated time."""

    samples: list = field(default_factory=list)  # (t, Pose)
    actions: list = field(default_factory=list)
    collision_events: list = field(default_factory=list)
    stopped: bool = False
    stop_pose: Pose | None = None

    @property
    def final_pose(self) -> Pose:
        return self.samples[-1][1]

    def traveled_length(self) -> float:
        pts = np.array([(p.x, p.y) for _, p in self.samples])
        if len(pts) < 2:
            return 0.0
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    done: bool
    done_reason: str | None  # "stopped" | "collision" | "step_limit"
    collided: bool


def trajectory_to_csv(trajectory: Trajectory) -> str:
    """Human-study CSV: header t,x,y,yaw; one row per 0.05 s sample,
    6-decimal fixed precision."""
    out = io.StringIO()
    out.write("t,x,y,yaw\n")
    for t, pose in trajectory.samples:
        out.write(f"{t:.6f},{pose.x:.6f},{pose.y:.6f},{pose.yaw:.6f}\n")
    return out.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0].strip() != "t,x,y,yaw":
        raise ValueError("expected header 't,x,y,yaw'")
    samples = []
    for ln in lines[1:]:
        t, x, y, yaw = (float(v) for v in ln.split(","))
        samples.append((t, Pose(x, y, yaw)))
    traj = Trajectory(samples=samples)
    traj.stopped = True  # an exported log represents a completed, stopped run
    if samples:
        traj.stop_pose = samples[-1][1]
    return traj


class Simulator:
    """Owns one episode's mutable state; create one per concurrent worker."""

    def __init__(self, scene: Scene, config: SimConfig = SimConfig()):
        self.scene = scene
        self.config = config
        self.grid = build_occupancy(scene, config.resolution, config.agent.height)
        self.nav_grid = dilate(self.grid, config.agent.radius)
        self._detection_masks: dict[str, np.ndarray | None] = {}
        self._episode = None
        self._pose: Pose | None = None
        self._trajectory: Trajectory | None = None
        self._steps = 0
        self._time = 0.0
        self._done = False
        self._done_reason: str | None = None
        self._collided_last = False

    # ------------------------------------------------------------------
    # Episode lifecycle
    # ------------------------------------------------------------------

    @property
    def trajectory(self) -> Trajectory:
        if self._trajectory is None:
            raise EpisodeFinished("no active episode; call reset() first")
        return self._trajectory

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, episode) -> Observation:
        if episode.scene_id != self.scene.scene_id:
            raise InvalidEpisode(
                f"episode scene {episode.scene_id!r} != simulator scene "
                f"{self.scene.scene_id!r}")
        start = episode.start
        if not self.nav_grid.point_in_bounds(start.xy) or self.nav_grid.is_occupied(start.xy):
            raise InvalidEpisode("start pose occupied or off-grid")
        self._episode = episode
        self._pose = start
        self._trajectory = Trajectory(samples=[(0.0, start)])
        self._steps = 0
        self._time = 0.0
        self._done = False
        self._done_reason = None
        self._collided_last = False
        return self.sense()

    def step(self, action: Action) -> StepResult:
        if self._trajectory is None:
            raise EpisodeFinished("call reset() before step()")
        if self._done:
            raise EpisodeFinished("episode already finished")
        cfg = self.config
        if isinstance(action, OracleQuery):
            raise UnsupportedAction("oracle queries are handled by the service layer")
        if isinstance(action, WaypointHop) and cfg.mode != TELHOP:
            raise UnsupportedAction("waypoint hops are only legal in Tel-Hop mode")

        collided = False
        if isinstance(action, Discrete):
            if action.primitive == STOP:
                self._trajectory.stopped = True
                self._trajectory.stop_pose = self._pose
            else:
                collided = self._run_motion(*self._primitive_command(action.primitive))
        elif isinstance(action, Continuous):
            self._validate_continuous(action)
            n = max(1, round(action.dt / cfg.substep))
            collided = self._run_motion(action.v, action.omega, n)
        elif isinstance(action, WaypointHop):
            self._hop(action.target)
        else:
            raise UnsupportedAction(f"unknown action {action!r}")

        self._trajectory.actions.append(action)
        self._steps += 1
        self._collided_last = collided

        if self._trajectory.stopped:
            self._done, self._done_reason = True, "stopped"
        elif collided and cfg.mode == STRICT:
            self._done, self._done_reason = True, "collision"
        elif self._steps >= cfg.max_steps:
            self._done, self._done_reason = True, "step_limit"
        return StepResult(self.sense(), self._done, self._done_reason, collided)

    # ------------------------------------------------------------------
    # Motion
    # ------------------------------------------------------------------

    def _validate_continuous(self, action: Continuous) -> None:
        agent = self.config.agent
        if abs(action.v) > agent.max_linear_speed + 1e-9:
            raise UnsupportedAction("linear speed exceeds agent limit")
        if abs(action.omega) > agent.max_angular_speed + 1e-9:
            raise UnsupportedAction("angular speed exceeds agent limit")
        if not (0 < action.dt <= 1.0):
            raise UnsupportedAction("dt must be in (0, 1] seconds")

    def _primitive_command(self, primitive: str) -> tuple[float, float, int]:
        """Map a primitive to (v, omega, substep count) hitting the exact
        magnitude on the substep grid without exceeding speed limits."""
        agent = self.config.agent
        h = self.config.substep
        if primitive == FORWARD:
            n = max(1, math.ceil(FORWARD_DISTANCE / (agent.max_linear_speed * h) - 1e-9))
            return FORWARD_DISTANCE / (n * h), 0.0, n
        n = max(1, math.ceil(TURN_ANGLE / (agent.max_angular_speed * h) - 1e-9))
        omega = TURN_ANGLE / (n * h)
        return 0.0, omega if primitive == TURN_LEFT else -omega, n

    def _run_motion(self, v: float, omega: float, substeps: int) -> bool:
        cfg = self.config
        h = cfg.substep
        blocked = 0.0
        first_contact = None
        for _ in range(substeps):
            pose = self._pose
            new_yaw = normalize_angle(pose.yaw + omega * h)
            if abs(omega) < 1e-12:
                dx = v * h * math.cos(pose.yaw)
                dy = v * h * math.sin(pose.yaw)
            else:
                # exact unicycle arc endpoints
                dx = v / omega * (math.sin(pose.yaw + omega * h) - math.sin(pose.yaw))
                dy = -v / omega * (math.cos(pose.yaw + omega * h) - math.cos(pose.yaw))
            start = np.array([pose.x, pose.y])
            end, contact = self._sweep_disc(start, np.array([dx, dy]))
            cmd_len = math.hypot(dx, dy)
            achieved = float(np.hypot(*(end - start)))
            blocked += max(0.0, cmd_len - achieved)
            if contact is not None and first_contact is None:
                first_contact = contact
            self._pose = Pose(float(end[0]), float(end[1]), new_yaw)
            self._time += h
            self._trajectory.samples.append((self._time, self._pose))
        if blocked >= cfg.collision_thresh - 1e-12:
            self._trajectory.collision_events.append(CollisionEvent(
                self._time, first_contact or self._pose.xy, blocked))
            return True
        return False

    def _hop(self, target) -> None:
        """Teleport; penetrating targets relocate to the nearest free cell of
        the agent-dilated grid (not a collision event)."""
        tx, ty = float(target[0]), float(target[1])
        if not (math.isfinite(tx) and math.isfinite(ty)):
            raise UnsupportedAction("hop target must be finite")
        nav = self.nav_grid
        if not nav.point_in_bounds((tx, ty)) or nav.is_occupied((tx, ty)):
            tx, ty = nearest_free_point(nav, (tx, ty))
        pose = self._pose
        dx, dy = tx - pose.x, ty - pose.y
        yaw = math.atan2(dy, dx) if math.hypot(dx, dy) > 1e-9 else pose.yaw
        self._pose = Pose(tx, ty, yaw)
        self._time += self.config.substep
        self._trajectory.samples.append((self._time, self._pose))

    # ------------------------------------------------------------------
    # Collision sweep: disc vs occupied cell rectangles
    # ------------------------------------------------------------------

    def _local_rects(self, pos: np.ndarray, reach: float) -> np.ndarray:
        grid = self.grid
        res = grid.resolution
        r0, c0 = grid.world_to_cell((pos[0] - reach, pos[1] - reach))
        r1, c1 = grid.world_to_cell((pos[0] + reach, pos[1] + reach))
        r0, c0 = max(r0, 0), max(c0, 0)
        r1, c1 = min(r1, grid.height - 1), min(c1, grid.width - 1)
        if r1 < r0 or c1 < c0:
            return np.empty((0, 4))
        window = grid.cells[r0:r1 + 1, c0:c1 + 1]
        rc = np.argwhere(window)
        if len(rc) == 0:
            return np.empty((0, 4))
        x0 = grid.origin[0] + (rc[:, 1] + c0) * res
        y0 = grid.origin[1] + (rc[:, 0] + r0) * res
        return np.column_stack([x0, y0, x0 + res, y0 + res])

    def _sweep_disc(self, start: np.ndarray, d: np.ndarray):
        """Move the agent disc by d with slide resolution. Returns
        (end position, first contact point or None)."""
        radius = self.config.agent.radius
        pos = start.astype(float).copy()
        remaining = d.astype(float).copy()
        total = float(np.hypot(*remaining))
        if total < 1e-12:
            return pos, None
        rects = self._local_rects(pos, radius + total + 2 * self.grid.resolution)
        contact_pt = None
        for _ in range(4):
            dist = float(np.hypot(*remaining))
            if dist < 1e-9:
                break
            u = remaining / dist
            t, normal, feature_pt = _cast_disc(pos, u, dist, rects, radius)
            if t >= dist:
                pos = pos + remaining
                break
            travel = max(0.0, t - _SKIN)
            pos = pos + u * travel
            if contact_pt is None:
                contact_pt = feature_pt
            if not self.config.allow_sliding:
                break
            leftover = u * (dist - travel)
            into = float(leftover @ normal)
            if into < 0:
                leftover = leftover - into * normal
            if float(np.hypot(*leftover)) < 1e-9:
                break
            remaining = leftover
        if contact_pt is None:
            return pos, None
        return pos, (float(contact_pt[0]), float(contact_pt[1]))

    # ------------------------------------------------------------------
    # Sensing
    # ------------------------------------------------------------------

    def _mask_for(self, object_id: str):
        """Cells to ignore when testing visibility of an object: its own
        footprint plus whatever it rests on (items on tables stay visible)."""
        if object_id not in self._detection_masks:
            obj = self.scene.object(object_id)
            mask = rasterize_footprint_mask(self.grid, obj.footprint)
            seen = {object_id}
            frontier = [obj]
            while frontier:
                cur = frontier.pop()
                for sup in supports_of(self.scene, cur):
                    if sup.object_id not in seen:
                        seen.add(sup.object_id)
                        mask |= rasterize_footprint_mask(self.grid, sup.footprint)
                        frontier.append(sup)
            self._detection_masks[object_id] = mask
        return self._detection_masks[object_id]

    def sense(self) -> Observation:
        if self._pose is None:
            raise EpisodeFinished("call reset() before sense()")
        return self._observe(self._pose, self._steps, self._collided_last)

    def observe_at(self, pose: Pose) -> Observation:
        """Detached sensor read at an arbitrary pose; no episode required."""
        return self._observe(pose, 0, False)

    def _observe(self, pose: Pose, step_index: int, collided: bool) -> Observation:
        cfg = self.config
        scan = []
        for k in range(cfg.scan_bearing_count):
            rel = normalize_angle(k * 2 * math.pi / cfg.scan_bearing_count)
            rng = ray_cast(self.grid, pose.xy, pose.yaw + rel, cfg.scan_max_range)
            scan.append((rel, rng))
        detections = []
        for obj in sorted(self.scene.objects, key=lambda o: o.object_id):
            cx, cy = obj.footprint.center
            dist = math.hypot(cx - pose.x, cy - pose.y)
            if dist > cfg.scan_max_range or dist < 1e-9:
                continue
            bearing_abs = math.atan2(cy - pose.y, cx - pose.x)
            seen = ray_cast(self.grid, pose.xy, bearing_abs, dist,
                            ignore=self._mask_for(obj.object_id))
            if seen >= dist - 1e-9:
                detections.append(Detection(
                    obj.object_id, obj.label,
                    normalize_angle(bearing_abs - pose.yaw), dist))
        return Observation(pose, tuple(scan), tuple(detections),
                           step_index, collided)


def _cast_disc(pos, u, dist, rects, radius):
    """First contact of a disc translated along unit vector u against
    axis-aligned rectangles (Minkowski rounded rects).

    A contact at t ~ 0 (the disc already touches or slightly overlaps a
    surface) blocks only when the motion pushes into it; tangential and
    receding motion stays free, so grazing contact cannot freeze the agent.
    Returns (t, unit normal, contact point); t = inf when free."""
    if len(rects) == 0:
        return math.inf, None, None
    px, py = float(pos[0]), float(pos[1])
    ux, uy = float(u[0]), float(u[1])
    x0, y0, x1, y1 = rects[:, 0], rects[:, 1], rects[:, 2], rects[:, 3]

    best_t = math.inf
    best_normal = None
    best_point = None

    def consider(t, normal, point):
        nonlocal best_t, best_normal, best_point
        if t < best_t:
            best_t = t
            best_normal = normal
            best_point = point

    def slab(p, uc, lo, hi):
        if abs(uc) < 1e-15:
            inside = (lo <= p) & (p <= hi)
            tmin = np.where(inside, -np.inf, np.inf)
            tmax = np.where(inside, np.inf, -np.inf)
            return tmin, tmax
        t1 = (lo - p) / uc
        t2 = (hi - p) / uc
        return np.minimum(t1, t2), np.maximum(t1, t2)

    # expanded boxes: x-faces of the rounded rect (axis 0), then y-faces
    for bx0, by0, bx1, by1, axis in (
        (x0 - radius, y0, x1 + radius, y1, 0),
        (x0, y0 - radius, x1, y1 + radius, 1),
    ):
        txmin, txmax = slab(px, ux, bx0, bx1)
        tymin, tymax = slab(py, uy, by0, by1)
        t_enter = np.maximum(txmin, tymin)
        t_exit = np.minimum(txmax, tymax)
        overlap = (t_enter <= t_exit + 1e-12) & (t_exit > 0)

        entering = overlap & (t_enter > 1e-12) & (t_enter < dist)
        if entering.any():
            te = np.where(entering, t_enter, np.inf)
            i = int(np.argmin(te))
            t = float(te[i])
            # normal from the face actually entered (the later slab)
            if txmin[i] >= tymin[i] and abs(ux) > 1e-15:
                normal = np.array([-math.copysign(1.0, ux), 0.0])
                point = np.array([px + t * ux - normal[0] * radius, py + t * uy])
            else:
                normal = np.array([0.0, -math.copysign(1.0, uy)])
                point = np.array([px + t * ux, py + t * uy - normal[1] * radius])
            consider(t, normal, point)

        penetrating = overlap & (t_enter <= 1e-12)
        if penetrating.any():
            idx = np.nonzero(penetrating)[0]
            if axis == 0:
                n_sign = np.sign(px - (x0[idx] + x1[idx]) / 2)
                n_sign[n_sign == 0] = 1.0
                pushing = n_sign * ux < -1e-12
                for j, sgn in zip(idx[pushing], n_sign[pushing]):
                    consider(0.0, np.array([sgn, 0.0]),
                             np.array([px - sgn * radius, py]))
            else:
                n_sign = np.sign(py - (y0[idx] + y1[idx]) / 2)
                n_sign[n_sign == 0] = 1.0
                pushing = n_sign * uy < -1e-12
                for j, sgn in zip(idx[pushing], n_sign[pushing]):
                    consider(0.0, np.array([0.0, sgn]),
                             np.array([px, py - sgn * radius]))

    # corner circles
    corners_x = np.concatenate([x0, x0, x1, x1])
    corners_y = np.concatenate([y0, y1, y0, y1])
    rel_x = px - corners_x
    rel_y = py - corners_y
    b = ux * rel_x + uy * rel_y
    c0 = rel_x ** 2 + rel_y ** 2 - radius ** 2
    disc = b * b - c0
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        t_in = -b - sq
        t_out = -b + sq

    entering = (disc > 1e-15) & (t_in > 1e-12) & (t_in < dist) & (t_out > 0)
    if entering.any():
        te = np.where(entering, t_in, np.inf)
        i = int(np.argmin(te))
        t = float(te[i])
        qx, qy = px + t * ux, py + t * uy
        nx, ny = qx - corners_x[i], qy - corners_y[i]
        norm = math.hypot(nx, ny) or 1.0
        consider(t, np.array([nx / norm, ny / norm]),
                 np.array([corners_x[i], corners_y[i]]))

    penetrating = (disc > 1e-15) & (t_in <= 1e-12) & (t_out > 0)
    if penetrating.any():
        for i in np.nonzero(penetrating)[0]:
            nx, ny = rel_x[i], rel_y[i]
            norm = math.hypot(nx, ny)
            if norm < 1e-12:
                nx, ny, norm = -ux, -uy, 1.0
            nx, ny = nx / norm, ny / norm
            if nx * ux + ny * uy < -1e-12:  # pushing in
                consider(0.0, np.array([nx, ny]),
                         np.array([corners_x[i], corners_y[i]]))
    return best_t, best_normal, best_point
