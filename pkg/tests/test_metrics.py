import json
import math
from dataclasses import dataclass, field

import numpy as np
import pytest

from navbench.geometry import OccupancyGrid, PlannedPath, polyline_length
from navbench.metrics import (
    EpisodeResult,
    GeodesicCache,
    MismatchedEpisode,
    aggregate,
    downsample,
    dtw,
    long_horizon_counts,
    ndtw,
    report_from_json,
    report_to_csv,
    report_to_json,
    score_episode,
    score_long_horizon,
)
from navbench.simulator import Pose, Trajectory


@dataclass(frozen=True)
class Goal:
    point: tuple
    target_object_id: str | None = None


@dataclass(frozen=True)
class Ep:
    episode_id: str
    start: Pose
    goals: tuple
    reference_path: PlannedPath
    success_thresh: float = 3.0
    task_type: str = "coarse"


def empty_nav_grid(n=30, res=1.0):
    return OccupancyGrid(res, (0.0, 0.0), np.zeros((n, n), dtype=bool))


def path_of(points):
    pts = np.asarray(points, dtype=float)
    return PlannedPath(pts, polyline_length(pts))


def traj_of(points, stopped=True, actions=0, collisions=0):
    t = Trajectory(samples=[(0.05 * i, Pose(x, y, 0.0)) for i, (x, y) in enumerate(points)])
    t.stopped = stopped
    if stopped:
        t.stop_pose = t.samples[-1][1]
    t.actions = [object()] * actions
    t.collision_events = [object()] * collisions
    return t


# ---------------------------------------------------------------------------
# DTW oracle: exhaustive alignment enumeration
# ---------------------------------------------------------------------------

def exhaustive_dtw(p, r):
    best = [math.inf]

    def cost(i, j):
        return math.hypot(p[i][0] - r[j][0], p[i][1] - r[j][1])

    def rec(i, j, acc):
        acc = acc + cost(i, j)
        if i == len(p) - 1 and j == len(r) - 1:
            if acc < best[0]:
                best[0] = acc
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < len(p) and nj < len(r):
                rec(ni, nj, acc)

    rec(0, 0, 0.0)
    return best[0]


def test_dtw_identical_sequences_zero():
    p = [(0, 0), (1, 1), (2, 0.5)]
    assert dtw(p, p) == 0.0


def test_dtw_single_point_alignment():
    assert dtw([(0, 0)], [(0, 0), (3, 4)]) == pytest.approx(5.0, abs=1e-12)


def test_dtw_matches_exhaustive_enumeration():
    rng = np.random.default_rng(123)
    for _ in range(60):
        n, m = rng.integers(1, 7, size=2)
        p = rng.uniform(-5, 5, size=(n, 2))
        r = rng.uniform(-5, 5, size=(m, 2))
        assert dtw(p, r) == pytest.approx(exhaustive_dtw(p, r), abs=1e-9)


def test_dtw_symmetric():
    rng = np.random.default_rng(5)
    p = rng.uniform(0, 4, size=(5, 2))
    r = rng.uniform(0, 4, size=(6, 2))
    assert dtw(p, r) == pytest.approx(dtw(r, p), abs=1e-9)


# ---------------------------------------------------------------------------
# nDTW
# ---------------------------------------------------------------------------

def test_ndtw_identity_is_one():
    r = [(i * 1.0, 0.0) for i in range(10)]
    assert ndtw(r, r, 3.0) == 1.0


def test_ndtw_uniform_offset_closed_form():
    r = [(i * 1.0, 0.0) for i in range(10)]
    p = [(i * 1.0, 1.0) for i in range(10)]
    assert ndtw(p, r, 3.0) == pytest.approx(math.exp(-10.0 / 30.0), abs=1e-9)


def test_ndtw_monotone_in_single_point_deviation():
    r = [(i * 1.0, 0.0) for i in range(8)]
    prev = 1.0
    for dev in np.linspace(0.5, 4.0, 8):
        p = [list(q) for q in r]
        p[4][1] = dev
        val = ndtw(p, r, 3.0)
        assert val < prev
        prev = val


def test_ndtw_in_unit_interval():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = rng.uniform(0, 10, size=(rng.integers(1, 20), 2))
        r = rng.uniform(0, 10, size=(rng.integers(1, 20), 2))
        v = ndtw(p, r, 3.0)
        assert 0.0 < v <= 1.0


def test_downsample_spacing_and_endpoint():
    pts = [(0.01 * i, 0.0) for i in range(101)]  # 1 m of 1 cm steps
    out = downsample(pts, 0.25)
    assert tuple(out[0]) == (0.0, 0.0)
    assert tuple(out[-1]) == (1.0, 0.0)
    gaps = np.hypot(*np.diff(out, axis=0).T)
    assert (gaps[:-1] >= 0.25 - 1e-12).all()


# ---------------------------------------------------------------------------
# Episode scoring
# ---------------------------------------------------------------------------

def line_points(a, b, step=0.25):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = max(1, int(round(np.hypot(*(b - a)) / step)))
    return [tuple(a + (b - a) * k / n) for k in range(n + 1)]


def test_score_perfect_stop():
    grid = empty_nav_grid()
    line = line_points((0.5, 0.5), (10.5, 0.5))
    ref = path_of(line)
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((10.5, 0.5)),), ref)
    traj = traj_of(line, actions=3)
    res = score_episode(ep, traj, grid)
    m = res.metrics
    assert m["NE"] == 0.0
    assert m["SR"] == 1 and m["OSR"] == 1
    assert m["SPL"] == 1.0
    assert m["nDTW"] == 1.0
    assert m["CR"] == 0.0


def test_spl_hand_case():
    grid = empty_nav_grid()
    ref = path_of([(0.5, 0.5), (10.5, 0.5)])  # L = 10
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((10.5, 0.5)),), ref)
    # overshoot to 11.75 then come back: P = 11.25 + 1.25 = 12.5
    traj = traj_of([(0.5, 0.5), (11.75, 0.5), (10.5, 0.5)], actions=2)
    res = score_episode(ep, traj, grid)
    assert res.metrics["P"] == pytest.approx(12.5, abs=1e-12)
    assert res.metrics["SPL"] == pytest.approx(0.8, abs=1e-12)


def test_pass_through_but_stop_far_gives_zero_sr():
    grid = empty_nav_grid()
    ref = path_of([(0.5, 0.5), (10.5, 0.5)])
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((10.5, 0.5)),), ref)
    traj = traj_of([(0.5, 0.5), (10.5, 0.5), (18.5, 0.5)], actions=2)
    res = score_episode(ep, traj, grid)
    assert res.metrics["SR"] == 0
    assert res.metrics["OSR"] == 0  # stop pose is 8 m from the goal
    assert res.metrics["NE"] == pytest.approx(8.0)


def test_no_stop_means_failure_but_osr_from_final_pose():
    grid = empty_nav_grid()
    ref = path_of([(0.5, 0.5), (10.5, 0.5)])
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((10.5, 0.5)),), ref)
    traj = traj_of([(0.5, 0.5), (9.5, 0.5)], stopped=False, actions=2)
    res = score_episode(ep, traj, grid)
    assert res.metrics["SR"] == 0
    assert res.metrics["OSR"] == 1


def test_success_blocked_by_wall_geodesic():
    # wall between stop pose and goal: Euclidean 1 m but geodesic long
    cells = np.zeros((20, 20), dtype=bool)
    cells[:19, 10] = True
    grid = OccupancyGrid(1.0, (0.0, 0.0), cells)
    ref = path_of([(9.5, 0.5), (11.5, 0.5)])
    ep = Ep("e1", Pose(9.5, 0.5, 0), (Goal((11.5, 0.5)),), ref)
    traj = traj_of([(9.5, 0.5)], actions=1)
    res = score_episode(ep, traj, grid)
    assert res.metrics["NE"] == pytest.approx(2.0)
    assert res.metrics["SR"] == 0 and res.metrics["OSR"] == 0


def test_collision_rate():
    grid = empty_nav_grid()
    ref = path_of([(0.5, 0.5), (4.5, 0.5)])
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((4.5, 0.5)),), ref)
    traj = traj_of([(0.5, 0.5), (4.5, 0.5)], actions=8, collisions=2)
    res = score_episode(ep, traj, grid)
    assert res.metrics["CR"] == pytest.approx(0.25)
    empty = traj_of([(0.5, 0.5)], actions=0)
    assert score_episode(ep, empty, grid).metrics["CR"] == 0.0


def test_mismatched_episode():
    grid = empty_nav_grid()
    ref = path_of([(0.5, 0.5), (4.5, 0.5)])
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((4.5, 0.5)),), ref)
    with pytest.raises(MismatchedEpisode):
        score_episode(ep, traj_of([(3.0, 3.0), (4.0, 3.0)]), grid)


def test_spl_le_sr_le_osr_property():
    grid = empty_nav_grid()
    rng = np.random.default_rng(17)
    for _ in range(40):
        pts = rng.uniform(0.5, 25.5, size=(rng.integers(2, 12), 2))
        ref = path_of([tuple(pts[0]), tuple(rng.uniform(0.5, 25.5, 2))])
        ep = Ep("e", Pose(*pts[0], 0), (Goal(tuple(ref.waypoints[-1])),), ref)
        traj = traj_of([tuple(q) for q in pts], stopped=bool(rng.random() < 0.7),
                       actions=int(rng.integers(1, 20)))
        m = score_episode(ep, traj, grid).metrics
        assert m["SPL"] <= m["SR"] <= m["OSR"]
        assert 0 < m["nDTW"] <= 1


# ---------------------------------------------------------------------------
# Long-horizon conditional success
# ---------------------------------------------------------------------------

def lh_result(eid, reached, sr):
    return EpisodeResult(eid, tuple(reached), Pose(0, 0, 0), 5, 0,
                         {"TL": 1.0, "NE": 1.0, "SR": sr, "OSR": sr,
                          "SPL": float(sr), "nDTW": 0.5, "CR": 0.0,
                          "L": 1.0, "P": 1.0})


def test_long_horizon_count_arithmetic():
    results = []
    for i in range(10):
        r1 = i < 8
        r2 = i < 4
        results.append(lh_result(f"e{i}", (r1, r2), 1 if r2 else 0))
    out = score_long_horizon(results)
    assert out["SR_1"] == pytest.approx(80.0)
    assert out["SR_2"] == pytest.approx(50.0)
    assert out["SR_All"] == pytest.approx(40.0)


def test_long_horizon_null_denominator():
    results = [lh_result(f"e{i}", (False, False), 0) for i in range(5)]
    out = score_long_horizon(results)
    assert out["SR_1"] == 0.0
    assert out["SR_2"] is None


def test_telescoping_identity():
    rng = np.random.default_rng(3)
    results = []
    for i in range(40):
        r1 = bool(rng.random() < 0.9)
        r2 = bool(r1 and rng.random() < 0.7)
        r3 = bool(r2 and rng.random() < 0.6)
        # every all-goal reacher stops successfully
        results.append(lh_result(f"e{i:03d}", (r1, r2, r3), 1 if r3 else 0))
    counts = long_horizon_counts(results)
    out = score_long_horizon(results)
    assert counts["success"] == counts["reached"][2]
    if all(v for v in counts["reached"][:2]):
        prod = out["SR_1"] / 100
        for k in (2, 3):
            prod *= out[f"SR_{k}"] / 100
        assert prod == pytest.approx(out["SR_All"] / 100, abs=1e-12)
    # raw-count identity: SR_All * N == number of successful stops
    assert out["SR_All"] * counts["N"] / 100 == pytest.approx(counts["success"])


# ---------------------------------------------------------------------------
# Aggregation and report formats
# ---------------------------------------------------------------------------

def test_aggregate_single_episode_equals_per_episode():
    grid = empty_nav_grid()
    ref = path_of([(0.5, 0.5), (10.5, 0.5)])
    ep = Ep("e1", Pose(0.5, 0.5, 0), (Goal((10.5, 0.5)),), ref)
    traj = traj_of([(0.5, 0.5), (10.5, 0.5)], actions=4)
    res = score_episode(ep, traj, grid)
    report = aggregate([res], {"mode": "strict", "success_thresh": 3.0})
    agg = report.aggregates
    assert agg["N"] == 1
    assert agg["TL"] == res.metrics["TL"]
    assert agg["SR"] == 100.0
    assert agg["OSR"] == 100.0
    assert report.config["mode"] == "strict"


def test_report_json_round_trip():
    results = [lh_result(f"e{i}", (True, i % 2 == 0), i % 2) for i in range(4)]
    report = aggregate(results, {"mode": "telhop"})
    text = report_to_json(report)
    back = report_from_json(text)
    assert report_to_json(back) == text


def test_report_csv_columns():
    results = [lh_result(f"e{i}", (True, True), 1) for i in range(3)]
    report = aggregate(results, {})
    csv_text = report_to_csv(report)
    header = csv_text.splitlines()[0].split(",")
    assert header[:8] == ["episode_id", "TL", "NE", "SR", "OSR", "SPL", "nDTW", "CR"]
    assert header[8:] == ["reached_1", "reached_2"]
    assert len(csv_text.splitlines()) == 4
