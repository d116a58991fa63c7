"""Baseline agents, online-training supervision, and the dialogue oracle.

The oracle follower tracks an episode's reference path with continuous
commands (a diagnostic upper bound: it reads the reference). The random
agent samples motion primitives. The greedy agent steers toward open space
and stops on the oracle-stop condition (goal access, documented non-blind).

``supervise`` implements scheduled sampling between an oracle waypoint
(shortest geodesic to target) and the policy's own prediction; the oracle
stop fires within 1.5 m geodesic of the target in open space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from navbench.geometry import geodesic_distance
from navbench.metrics import GeodesicCache
from navbench.scene import IN
from navbench.simulator import (
    FORWARD,
    STOP,
    TURN_LEFT,
    TURN_RIGHT,
    Continuous,
    Discrete,
    Observation,
    Pose,
    Simulator,
    normalize_angle,
)

ORACLE_STOP_DISTANCE = 1.5  # geodesic meters; online-training stop condition
SCHEDULE_RATIO = 0.85
DECAY_TIME = 4


def schedule_ratio(epoch: int, base: float = SCHEDULE_RATIO,
                   decay_time: int = DECAY_TIME) -> float:
    """Teacher-sampling probability, decayed multiplicatively every
    ``decay_time`` epochs."""
    return base ** (epoch // decay_time + 1)


@dataclass(frozen=True)
class SupervisionStep:
    candidates: tuple
    oracle_index: int
    oracle_stop: bool
    sampled_action_source: str  # "oracle" | "prediction"


def supervise(candidates, agent_pose: Pose, target, ratio: float,
              rng: np.random.Generator, nav_grid,
              cache: GeodesicCache | None = None) -> SupervisionStep:
    """Pick the oracle waypoint (shortest geodesic to target, ties by list
    order) and sample the action source with probability ``ratio`` for the
    oracle."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if cache is None:
        cache = GeodesicCache(nav_grid)
    geos = [cache.geodesic(tuple(c), tuple(target)) for c in candidates]
    oracle_index = min(range(len(geos)), key=geos.__getitem__)
    agent_geo = cache.geodesic(agent_pose.xy, tuple(target))
    oracle_stop = agent_geo < ORACLE_STOP_DISTANCE and not nav_grid.is_occupied(agent_pose.xy)
    source = "oracle" if rng.random() < ratio else "prediction"
    return SupervisionStep(tuple(tuple(c) for c in candidates), oracle_index,
                           oracle_stop, source)


# ---------------------------------------------------------------------------
# Dialogue oracle
# ---------------------------------------------------------------------------

class OracleDisabled(Exception):
    pass


@dataclass(frozen=True)
class OracleAnswer:
    text: str
    facts_used: tuple  # scene-graph edge ids
    hint: dict  # {"bearing_to_goal": rad rel. to yaw, "geodesic_remaining": m}


def oracle_answer(query: str, ctx, episode, pose: Pose) -> OracleAnswer:
    """Deterministic rule-based answer for dialogue episodes.

    Keyword-matches the query against the target label, room labels, and
    direction/distance phrasings; always returns the goal hint.
    """
    if not episode.instruction_bundle.oracle_enabled:
        raise OracleDisabled(f"episode {episode.episode_id} has no oracle")
    goal = episode.goals[-1]
    remaining = geodesic_distance(ctx.nav_grid, pose.xy, goal.point)
    bearing = normalize_angle(
        math.atan2(goal.point[1] - pose.y, goal.point[0] - pose.x) - pose.yaw)
    hint = {"bearing_to_goal": bearing, "geodesic_remaining": remaining}

    q = query.lower()
    target = ctx.scene.object(goal.target_object_id) if goal.target_object_id else None
    parts = []
    facts = []

    wants_target = target is not None and (target.label in q or "where" in q
                                           or "find" in q or "object" in q)
    if wants_target:
        edge = ctx.graph.strongest_relation(target.object_id)
        if edge is not None:
            other = (ctx.scene.room(edge[2]).label if edge[1] == IN
                     else ctx.scene.object(edge[2]).label)
            rel = {"ON": "on", "NEAR": "near", "IN": "in"}[edge[1]]
            parts.append(f"The {target.label} is {rel} the {other}.")
            facts.append(ctx.graph.edge_id(edge))
        for e in ctx.graph.edges_of(target.object_id):
            if e[1] == IN:
                parts.append(f"Head toward the {ctx.scene.room(e[2]).label}.")
                if ctx.graph.edge_id(e) not in facts:
                    facts.append(ctx.graph.edge_id(e))
                break
    if "direction" in q or "which way" in q or "turn" in q:
        side = "ahead" if abs(bearing) < math.pi / 6 else (
            "to your left" if bearing > 0 else "to your right")
        parts.append(f"The goal is {side}.")
    if "how far" in q or "distance" in q:
        parts.append(f"About {remaining:.1f} meters to go.")
    if not parts:
        parts.append("I can offer the bearing and remaining distance; see the hint.")
    return OracleAnswer(" ".join(parts), tuple(facts), hint)


# ---------------------------------------------------------------------------
# Baseline agents
# ---------------------------------------------------------------------------

class Agent:
    """Policy mapping Observation -> Action; ``begin`` binds the episode."""

    def begin(self, episode, sim: Simulator) -> None:
        pass

    def act(self, obs: Observation):
        raise NotImplementedError


def _line_free(nav_grid, a, b) -> bool:
    """Every cell under segment a-b is free on the dilated grid (so a disc
    tracking the segment keeps planner clearance)."""
    ax, ay = a
    bx, by = b
    dist = math.hypot(bx - ax, by - ay)
    n = max(1, int(math.ceil(dist / (nav_grid.resolution / 2))))
    for k in range(n + 1):
        t = k / n
        if nav_grid.is_occupied((ax + (bx - ax) * t, ay + (by - ay) * t)):
            return False
    return True


class OracleFollower(Agent):
    """Tracks the reference path with exact turn-then-advance continuous
    commands; stops within 0.5 m of the final waypoint."""

    stop_radius = 0.5
    advance_radius = 0.15
    lookahead = 0.6
    max_move = 0.8

    def begin(self, episode, sim):
        self.waypoints = np.asarray(episode.reference_path.waypoints, dtype=float)
        self.nav_grid = sim.nav_grid
        self.agent = sim.config.agent
        self.substep = sim.config.substep
        self.idx = 0
        self._last_xy = None
        self._stall = 0

    def _advance_index(self, pose):
        wp = self.waypoints
        # skip waypoints already reached, then extend along line of sight
        while (self.idx < len(wp) - 1
               and math.hypot(wp[self.idx][0] - pose.x, wp[self.idx][1] - pose.y)
               < self.advance_radius):
            self.idx += 1
        j = self.idx
        while (j + 1 < len(wp)
               and math.hypot(wp[j + 1][0] - pose.x, wp[j + 1][1] - pose.y) <= self.lookahead
               and _line_free(self.nav_grid, pose.xy, tuple(wp[j + 1]))):
            j += 1
        self.idx = j

    def act(self, obs):
        pose = obs.pose
        wp = self.waypoints
        final = wp[-1]
        if self._last_xy is not None:
            moved = math.hypot(pose.x - self._last_xy[0], pose.y - self._last_xy[1])
            if moved < 0.01:
                self._stall += 1
                if self._stall >= 2 and self.idx < len(wp) - 1:
                    self.idx += 1  # nudge past a grazing contact
                    self._stall = 0
            else:
                self._stall = 0
        self._last_xy = pose.xy

        self._advance_index(pose)
        d_final = math.hypot(final[0] - pose.x, final[1] - pose.y)
        if (d_final <= self.stop_radius and self.idx >= len(wp) - 1
                and not self.nav_grid.is_occupied(pose.xy)):
            return Discrete(STOP)

        target = wp[self.idx]
        dist = math.hypot(target[0] - pose.x, target[1] - pose.y)
        beta = normalize_angle(math.atan2(target[1] - pose.y, target[0] - pose.x)
                               - pose.yaw)
        h = self.substep
        if abs(beta) > 0.05:
            n = min(20, max(1, math.ceil(abs(beta) / (self.agent.max_angular_speed * h))))
            omega = beta / (n * h)
            if abs(omega) > self.agent.max_angular_speed:
                omega = math.copysign(self.agent.max_angular_speed, beta)
            return Continuous(0.0, omega, n * h)
        move = min(dist, self.max_move)
        n = min(20, max(1, math.ceil(move / (self.agent.max_linear_speed * h))))
        v = min(move / (n * h), self.agent.max_linear_speed)
        return Continuous(v, 0.0, n * h)


class RandomAgent(Agent):
    """Uniform motion primitives; STOP with probability 0.02."""

    def __init__(self, seed: int = 0, stop_prob: float = 0.02):
        self.rng = np.random.default_rng(seed)
        self.stop_prob = stop_prob

    def act(self, obs):
        if self.rng.random() < self.stop_prob:
            return Discrete(STOP)
        return Discrete(str(self.rng.choice([FORWARD, TURN_LEFT, TURN_RIGHT])))


class GreedyAgent(Agent):
    """Turns toward the widest free ray, walks forward, and stops on the
    oracle-stop condition (uses goal position: a non-blind diagnostic)."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def begin(self, episode, sim):
        self.goal = episode.goals[-1].point
        self.nav_grid = sim.nav_grid
        self.cache = GeodesicCache(sim.nav_grid)

    def act(self, obs):
        pose = obs.pose
        if (self.cache.geodesic(pose.xy, self.goal) < ORACLE_STOP_DISTANCE
                and not self.nav_grid.is_occupied(pose.xy)):
            return Discrete(STOP)
        goal_bearing = normalize_angle(
            math.atan2(self.goal[1] - pose.y, self.goal[0] - pose.x) - pose.yaw)
        # widest free ray, preferring directions toward the goal
        best = max(obs.range_scan,
                   key=lambda br: br[1] - 0.5 * abs(normalize_angle(br[0] - goal_bearing)))
        if abs(best[0]) > math.pi / 12:
            return Discrete(TURN_LEFT if best[0] > 0 else TURN_RIGHT)
        return Discrete(FORWARD)


def make_agent(kind: str, seed: int = 0) -> Agent:
    if kind == "oracle_follower":
        return OracleFollower()
    if kind == "random":
        return RandomAgent(seed)
    if kind == "greedy":
        return GreedyAgent(seed)
    raise ValueError(f"unknown agent kind {kind!r}")


def run_episode(sim: Simulator, episode, agent: Agent, max_actions: int | None = None):
    """Roll one episode to completion; returns the trajectory."""
    obs = sim.reset(episode)
    agent.begin(episode, sim)
    budget = max_actions if max_actions is not None else sim.config.max_steps
    for _ in range(budget):
        result = sim.step(agent.act(obs))
        obs = result.observation
        if result.done:
            break
    return sim.trajectory
