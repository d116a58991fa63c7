"""Evaluation protocol: per-episode scoring and aggregate reports.

Per-episode metrics: trajectory length (TL), navigation error (NE), success
rate (SR), oracle success rate (OSR), success weighted by path length (SPL),
normalized dynamic time warping (nDTW), and collision rate (CR). Long-horizon
splits additionally get conditional per-goal success rates.

Success gates on geodesic distance over the agent-dilated grid, so walls
cannot be "reached through"; NE stays Euclidean. Live and offline scoring
share this module, so recomputing metrics from a logged trajectory matches
the values reported at session end field for field.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from navbench.geometry import OccupancyGrid, distance_field
from navbench.simulator import Pose, Trajectory

DTW_WAYPOINT_SPACING = 0.25  # both sequences are down-sampled before DTW


class MismatchedEpisode(Exception):
    """Trajectory does not belong to the episode being scored."""


def dtw(p_points, r_points) -> float:
    """Classical boundary-matched DTW with Euclidean point cost and
    {match, insert, delete} steps. Symmetric in its arguments."""
    p = np.asarray(p_points, dtype=float)
    r = np.asarray(r_points, dtype=float)
    if len(p) == 0 or len(r) == 0:
        raise ValueError("sequences must be non-empty")
    cost = np.hypot(p[:, None, 0] - r[None, :, 0], p[:, None, 1] - r[None, :, 1])
    acc = np.empty_like(cost)
    acc[0] = np.cumsum(cost[0])
    for i in range(1, len(p)):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, len(r)):
            row[j] = cost[i, j] + min(prev[j], row[j - 1], prev[j - 1])
    return float(acc[-1, -1])


def downsample(points, spacing: float = DTW_WAYPOINT_SPACING) -> np.ndarray:
    """Keep the first point, then points >= spacing from the last kept one;
    the final point is always kept."""
    pts = np.asarray(points, dtype=float)
    if len(pts) <= 1:
        return pts.copy()
    kept = [pts[0]]
    for q in pts[1:]:
        if math.hypot(q[0] - kept[-1][0], q[1] - kept[-1][1]) >= spacing:
            kept.append(q)
    if not np.array_equal(kept[-1], pts[-1]):
        kept.append(pts[-1])
    return np.array(kept)


def ndtw(p_points, r_points, success_thresh: float = 3.0) -> float:
    """exp(-DTW(P, R) / (|R| * success_thresh)) over down-sampled sequences;
    1.0 iff the sequences align with zero cost."""
    p = downsample(p_points)
    r = downsample(r_points)
    return float(math.exp(-dtw(p, r) / (len(r) * success_thresh)))


class GeodesicCache:
    """Distance fields over the dilated grid, one per goal cell, shared
    across all episodes that reuse a goal."""

    def __init__(self, nav_grid: OccupancyGrid):
        self.nav_grid = nav_grid
        self._fields: dict[tuple[int, int], np.ndarray] = {}

    def fld(self, goal_point) -> np.ndarray:
        key = self.nav_grid.world_to_cell(goal_point)
        if key not in self._fields:
            self._fields[key] = distance_field(self.nav_grid, goal_point)
        return self._fields[key]

    def geodesic(self, from_point, goal_point) -> float:
        r, c = self.nav_grid.world_to_cell(from_point)
        if not self.nav_grid.cell_in_bounds(r, c):
            return math.inf
        return float(self.fld(goal_point)[r, c])


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    per_goal_reached: tuple
    stop_pose: Pose
    num_actions: int
    num_collisions: int
    metrics: dict


def score_episode(episode, trajectory: Trajectory, nav_grid: OccupancyGrid,
                  cache: GeodesicCache | None = None) -> EpisodeResult:
    """Score one trajectory against its episode.

    ``nav_grid`` is the agent-dilated occupancy grid of the episode's scene.
    Raises MismatchedEpisode when the trajectory does not start at the
    episode start pose.
    """
    if not trajectory.samples:
        raise MismatchedEpisode("empty trajectory")
    t0 = trajectory.samples[0][1]
    if math.hypot(t0.x - episode.start.x, t0.y - episode.start.y) > 1e-6:
        raise MismatchedEpisode(
            f"trajectory start {t0.xy} != episode start {episode.start.xy}")
    if cache is None:
        cache = GeodesicCache(nav_grid)

    # positions quantized to the trajectory-CSV precision (1e-6 m) so that
    # scoring a live trajectory and rescoring its exported log agree exactly
    pts = np.round([(p.x, p.y) for _, p in trajectory.samples], 6)
    tl = float(np.hypot(*np.diff(pts, axis=0).T).sum()) if len(pts) > 1 else 0.0
    raw_stop = trajectory.stop_pose if trajectory.stopped else trajectory.samples[-1][1]
    stop_pose = Pose(round(raw_stop.x, 6), round(raw_stop.y, 6), raw_stop.yaw)
    goals = list(episode.goals)
    final_goal = goals[-1].point
    thresh = episode.success_thresh

    ne = math.hypot(stop_pose.x - final_goal[0], stop_pose.y - final_goal[1])
    geo_stop = cache.geodesic(stop_pose.xy, final_goal)
    stop_free = not nav_grid.is_occupied(stop_pose.xy)
    osr = 1 if geo_stop <= thresh else 0

    multi_goal = len(goals) > 1
    if multi_goal:
        reached = [False] * len(goals)
        idx = 0
        for x, y in pts:
            while idx < len(goals) and cache.geodesic((x, y), goals[idx].point) <= thresh:
                reached[idx] = True
                idx += 1
        priors_ok = all(reached[:-1])
        sr = 1 if (trajectory.stopped and priors_ok and geo_stop <= thresh
                   and stop_free) else 0
        per_goal_reached = tuple(reached)
    else:
        sr = 1 if (trajectory.stopped and geo_stop <= thresh and stop_free) else 0
        per_goal_reached = (bool(sr),)

    ref_len = episode.reference_path.length
    denom = max(tl, ref_len)
    spl = sr * (ref_len / denom) if denom > 0 else float(sr)
    num_actions = len(trajectory.actions)
    num_collisions = len(trajectory.collision_events)
    cr = num_collisions / num_actions if num_actions else 0.0

    metrics = {
        "TL": tl,
        "NE": ne,
        "SR": sr,
        "OSR": osr,
        "SPL": spl,
        "nDTW": ndtw(pts, episode.reference_path.waypoints, thresh),
        "CR": cr,
        "L": ref_len,
        "P": tl,
    }
    return EpisodeResult(episode.episode_id, per_goal_reached, stop_pose,
                         num_actions, num_collisions, metrics)


def long_horizon_counts(results) -> dict:
    """Raw counts behind the conditional success rates (exact integers)."""
    max_goals = max(len(r.per_goal_reached) for r in results)
    reached = []
    eligible = []
    for n in range(max_goals):
        with_goal = [r for r in results if len(r.per_goal_reached) > n]
        eligible.append(len(with_goal))
        reached.append(sum(1 for r in with_goal if r.per_goal_reached[n]))
    return {
        "N": len(results),
        "eligible": eligible,
        "reached": reached,
        "success": sum(int(r.metrics["SR"]) for r in results),
    }


def score_long_horizon(results) -> dict:
    """SR_1, conditional SR_n (None when the denominator is zero), and
    SR_All, as percentages."""
    counts = long_horizon_counts(results)
    n = counts["N"]
    if n == 0:
        raise ValueError("no results")
    out = {"SR_1": 100.0 * counts["reached"][0] / n}
    for k in range(1, len(counts["reached"])):
        prev = [r for r in results
                if len(r.per_goal_reached) > k and r.per_goal_reached[k - 1]]
        denom = len(prev)
        out[f"SR_{k + 1}"] = (100.0 * counts["reached"][k] / denom) if denom else None
    out["SR_All"] = 100.0 * counts["success"] / n
    return out


@dataclass(frozen=True)
class MetricsReport:
    config: dict
    per_episode: tuple
    aggregates: dict


_MEAN_KEYS = ("TL", "NE", "SPL", "nDTW", "CR")


def aggregate(results, config: dict | None = None) -> MetricsReport:
    """Arithmetic means over episodes; SR/OSR as percentages with two
    decimals. Long-horizon SR_n aggregates appear when any episode is
    multi-goal. Results are ordered by episode_id."""
    results = sorted(results, key=lambda r: r.episode_id)
    if not results:
        raise ValueError("no results to aggregate")
    per_episode = []
    for r in results:
        entry = {"episode_id": r.episode_id,
                 "num_actions": r.num_actions,
                 "num_collisions": r.num_collisions}
        entry.update(r.metrics)
        if len(r.per_goal_reached) > 1:
            entry["per_goal_reached"] = list(r.per_goal_reached)
        per_episode.append(entry)

    agg = {"N": len(results)}
    for key in _MEAN_KEYS:
        agg[key] = float(np.mean([r.metrics[key] for r in results]))
    agg["SR"] = round(100.0 * float(np.mean([r.metrics["SR"] for r in results])), 2)
    agg["OSR"] = round(100.0 * float(np.mean([r.metrics["OSR"] for r in results])), 2)
    if any(len(r.per_goal_reached) > 1 for r in results):
        lh = score_long_horizon(results)
        agg.update({k: (round(v, 2) if v is not None else None) for k, v in lh.items()})
    return MetricsReport(dict(config or {}), tuple(per_episode), agg)


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "config": report.config,
        "per_episode": list(report.per_episode),
        "aggregates": report.aggregates,
    }


def report_from_dict(doc: dict) -> MetricsReport:
    return MetricsReport(doc["config"], tuple(doc["per_episode"]), doc["aggregates"])


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> MetricsReport:
    return report_from_dict(json.loads(text))


def report_to_csv(report: MetricsReport) -> str:
    """One row per episode: TL,NE,SR,OSR,SPL,nDTW,CR plus reached_n columns
    when the split has multi-goal episodes."""
    max_goals = max((len(e.get("per_goal_reached", [])) for e in report.per_episode),
                    default=0)
    cols = ["episode_id", "TL", "NE", "SR", "OSR", "SPL", "nDTW", "CR"]
    cols += [f"reached_{i + 1}" for i in range(max_goals)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(cols)
    for e in report.per_episode:
        row = [e["episode_id"]] + [f"{e[k]:.6f}" for k in cols[1:8]]
        reached = e.get("per_goal_reached", [])
        row += [str(int(v)) for v in reached] + [""] * (max_goals - len(reached))
        writer.writerow(row)
    return out.getvalue()
