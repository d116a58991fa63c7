"""Episode and dataset generation.

Episodes pair an instruction bundle with a physics-valid trajectory: start
and goal sampled on the agent-dilated occupancy grid, reference path from
the grid planner, instructions from the template engine (optionally
refined by external clients). Datasets split scenes into
train / val_seen / val_unseen / test with the 177:33:53 scene ratio scaled
to the available count, and serialize to JSONL plus a manifest.

All sampling is deterministic: each scene derives its own RNG stream from
(dataset_seed, scene_id), so scenes can be generated in any order or in
parallel with identical output.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace

import numpy as np

from navbench.generator import GeneratorParams
from navbench.geometry import OccupancyGrid, PlannedPath, astar, dilate, polyline_length
from navbench.instructions import (
    caption_is_informative,
    coarse_templates,
    extract_relation,
    make_coarse_instructions,
    make_fine_instruction,
    parse_synthesizer_output,
    relation_phrase,
    RefinementError,
)
from navbench.metrics import GeodesicCache
from navbench.scene import IN, Scene, build_occupancy, build_scene_graph
from navbench.simulator import AgentBody, Pose, SimConfig, Simulator

TASK_FINE = "fine"
TASK_COARSE = "coarse"
TASK_VISUAL_REF = "visual_ref"
TASK_LONG_HORIZON = "long_horizon"
TASK_DIALOGUE = "dialogue"
TASK_TYPES = (TASK_FINE, TASK_COARSE, TASK_VISUAL_REF, TASK_LONG_HORIZON, TASK_DIALOGUE)

DEFAULT_GEODESIC_RANGE = (3.0, 15.0)
DEFAULT_SUCCESS_THRESH = 3.0
SAMPLING_BUDGET = 1000
SPLIT_RATIOS = (177, 33, 53)  # train : val_unseen : test scene ratio
GENERATOR_VERSION = "1"


class SamplingExhausted(Exception):
    pass


class UnreachableError(Exception):
    pass


class EpisodeInvariantError(Exception):
    pass


@dataclass(frozen=True)
class Goal:
    point: tuple[float, float]
    target_object_id: str | None = None


@dataclass(frozen=True)
class GoalSnapshot:
    captured_at: Pose
    visible: tuple  # (label, bearing, range) triples, as sensed at the goal


@dataclass(frozen=True)
class InstructionBundle:
    fine: str | None = None
    coarse: dict | None = None  # {"formal", "natural", "casual"}
    goal_snapshot: GoalSnapshot | None = None
    sub_instructions: tuple | None = None
    oracle_enabled: bool = False

    _REQUIRED = {
        TASK_FINE: ("fine",),
        TASK_COARSE: ("coarse",),
        TASK_VISUAL_REF: ("coarse", "goal_snapshot"),
        TASK_LONG_HORIZON: ("sub_instructions",),
        TASK_DIALOGUE: ("coarse",),
    }

    def check(self, task_type: str) -> None:
        required = set(self._REQUIRED[task_type])
        for name in ("fine", "coarse", "goal_snapshot", "sub_instructions"):
            present = getattr(self, name) is not None
            if name in required and not present:
                raise EpisodeInvariantError(f"{task_type} bundle missing {name}")
            if name not in required and present:
                raise EpisodeInvariantError(f"{task_type} bundle must not carry {name}")
        if self.oracle_enabled != (task_type == TASK_DIALOGUE):
            raise EpisodeInvariantError("oracle_enabled is exclusive to dialogue episodes")


@dataclass(frozen=True)
class Episode:
    episode_id: str
    scene_id: str
    task_type: str
    instruction_bundle: InstructionBundle
    start: Pose
    goals: tuple  # Goal, ordered
    reference_path: PlannedPath
    success_thresh: float = DEFAULT_SUCCESS_THRESH
    verified: bool = False


class SceneContext:
    """Per-scene derived data built once and shared: occupancy, dilated
    navigation grid, scene graph, geodesic cache, and a sensor simulator."""

    def __init__(self, scene: Scene, resolution: float = 0.05,
                 agent: AgentBody = AgentBody()):
        self.scene = scene
        self.agent = agent
        self.resolution = resolution
        self.grid: OccupancyGrid = build_occupancy(scene, resolution, agent.height)
        self.nav_grid: OccupancyGrid = dilate(self.grid, agent.radius)
        self.graph = build_scene_graph(scene)
        self.cache = GeodesicCache(self.nav_grid)
        self._sensor = Simulator(scene, SimConfig(resolution=resolution, agent=agent))
        free = np.argwhere(~self.nav_grid.cells)
        self._free_cells = free
        self.landmark_vocab = tuple(sorted(
            {o.label for o in scene.objects} | {r.label for r in scene.rooms}))

    def observation_at(self, pose: Pose):
        return self._sensor.observe_at(pose)

    def free_cell_center(self, index: int) -> tuple[float, float]:
        r, c = self._free_cells[index]
        return self.nav_grid.cell_center(int(r), int(c))

    @property
    def free_cell_count(self) -> int:
        return len(self._free_cells)


def sample_path(ctx: SceneContext, constraints=DEFAULT_GEODESIC_RANGE,
                rng: np.random.Generator | int = 0,
                goal_point: tuple | None = None,
                budget: int = SAMPLING_BUDGET):
    """Sample (start Pose, goal point, planned path) uniformly over free
    dilated cells, rejecting until the geodesic length fits ``constraints``.

    A fixed ``goal_point`` pins the goal and samples only the start.
    Raises SamplingExhausted when the budget runs out.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    lo, hi = constraints
    n = ctx.free_cell_count
    if n == 0:
        raise SamplingExhausted("no free cells on the dilated grid")
    for _ in range(budget):
        start_pt = ctx.free_cell_center(int(rng.integers(n)))
        goal = goal_point if goal_point is not None \
            else ctx.free_cell_center(int(rng.integers(n)))
        if start_pt == goal:
            continue
        path = astar(ctx.nav_grid, start_pt, goal)
        if path is None or not (lo <= path.length <= hi):
            continue
        wp = path.waypoints
        yaw = math.atan2(wp[1][1] - wp[0][1], wp[1][0] - wp[0][0])
        return Pose(start_pt[0], start_pt[1], yaw), goal, path
    raise SamplingExhausted(
        f"no start/goal pair with geodesic in [{lo}, {hi}] after {budget} tries")


def _goal_pose(path: PlannedPath) -> Pose:
    wp = path.waypoints
    yaw = math.atan2(wp[-1][1] - wp[-2][1], wp[-1][0] - wp[-2][0]) if len(wp) > 1 else 0.0
    return Pose(float(wp[-1][0]), float(wp[-1][1]), yaw)


def _snapshot_at(ctx: SceneContext, pose: Pose) -> GoalSnapshot:
    obs = ctx.observation_at(pose)
    visible = tuple((d.label, d.bearing, d.range) for d in obs.detections)
    return GoalSnapshot(pose, visible)


def _pick_goal_object(ctx: SceneContext, rng: np.random.Generator):
    """A target object with at least one scene-graph edge and a reachable
    free cell near it."""
    from navbench.geometry import nearest_free_point

    candidates = [o for o in sorted(ctx.scene.objects, key=lambda o: o.object_id)
                  if ctx.graph.edges_of(o.object_id)]
    if not candidates:
        raise SamplingExhausted("scene has no graph-connected objects")
    order = rng.permutation(len(candidates))
    for i in order:
        obj = candidates[int(i)]
        point = nearest_free_point(ctx.nav_grid, obj.footprint.center)
        c = obj.footprint.center
        if math.hypot(point[0] - c[0], point[1] - c[1]) <= 2.0:
            return obj, point
    raise SamplingExhausted("no goal object with nearby free space")


def make_fine_episode(ctx: SceneContext, episode_id: str, rng,
                      constraints=DEFAULT_GEODESIC_RANGE,
                      success_thresh=DEFAULT_SUCCESS_THRESH) -> Episode:
    start, goal, path = sample_path(ctx, constraints, rng)
    text = make_fine_instruction(path, ctx.graph, ctx.scene)
    bundle = InstructionBundle(fine=text)
    return Episode(episode_id, ctx.scene.scene_id, TASK_FINE, bundle, start,
                   (Goal(goal),), path, success_thresh)


def make_goal_episode_family(ctx: SceneContext, base_id: str, rng,
                             constraints=DEFAULT_GEODESIC_RANGE,
                             success_thresh=DEFAULT_SUCCESS_THRESH) -> dict:
    """Coarse, visual-reference, and dialogue episodes sharing one
    trajectory (identical start/goal/path); visual-ref adds the goal-pose
    snapshot and dialogue enables the oracle."""
    obj, goal_point = _pick_goal_object(ctx, rng)
    start, goal, path = sample_path(ctx, constraints, rng, goal_point=goal_point)
    coarse = make_coarse_instructions(obj, ctx.graph, ctx.scene)
    goals = (Goal(goal, obj.object_id),)
    shared = dict(scene_id=ctx.scene.scene_id, start=start, goals=goals,
                  reference_path=path, success_thresh=success_thresh)
    snapshot = _snapshot_at(ctx, _goal_pose(path))
    return {
        TASK_COARSE: Episode(f"{base_id}", task_type=TASK_COARSE,
                             instruction_bundle=InstructionBundle(coarse=coarse),
                             **shared),
        TASK_VISUAL_REF: Episode(f"{base_id}#vr", task_type=TASK_VISUAL_REF,
                                 instruction_bundle=InstructionBundle(
                                     coarse=coarse, goal_snapshot=snapshot),
                                 **shared),
        TASK_DIALOGUE: Episode(f"{base_id}#dlg", task_type=TASK_DIALOGUE,
                               instruction_bundle=InstructionBundle(
                                   coarse=coarse, oracle_enabled=True),
                               **shared),
    }


_ORDINALS = ("First", "Then", "Then", "Finally")


def chain_long_horizon(ctx: SceneContext, legs, episode_id: str,
                       success_thresh=DEFAULT_SUCCESS_THRESH) -> Episode:
    """Chain 2-3 single-goal episodes of one scene into a sequential task.
    Each leg is re-planned from the previous goal."""
    if not 2 <= len(legs) <= 3:
        raise EpisodeInvariantError("long-horizon episodes chain 2-3 sub-tasks")
    if any(leg.scene_id != ctx.scene.scene_id for leg in legs):
        raise EpisodeInvariantError("all legs must belong to the same scene")
    start = legs[0].start
    cursor = start.xy
    waypoints = []
    straight = diag = 0
    goals = []
    subs = []
    for i, leg in enumerate(legs):
        goal = leg.goals[-1]
        path = astar(ctx.nav_grid, cursor, goal.point)
        if path is None:
            raise UnreachableError(f"leg {i} has no path")
        wp = path.waypoints.tolist()
        waypoints.extend(wp if not waypoints else wp[1:])
        straight += path.straight_steps
        diag += path.diagonal_steps
        goals.append(goal)
        ordinal = _ORDINALS[i] if i < len(legs) - 1 else _ORDINALS[-1]
        coarse = leg.instruction_bundle.coarse
        text = coarse["natural"] if coarse else leg.instruction_bundle.fine
        subs.append(f"{ordinal}: {text}")
        cursor = goal.point
    path = PlannedPath(np.asarray(waypoints), polyline_length(waypoints),
                       straight, diag)
    bundle = InstructionBundle(sub_instructions=tuple(subs))
    return Episode(episode_id, ctx.scene.scene_id, TASK_LONG_HORIZON, bundle,
                   start, tuple(goals), path, success_thresh)


# ---------------------------------------------------------------------------
# Refinement (optional external clients; template fallback on any failure)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefinementClients:
    describer: object | None = None
    verifier: object | None = None
    synthesizer: object | None = None


def refine(bundle: InstructionBundle, episode_context: dict,
           clients: RefinementClients | None = None) -> InstructionBundle:
    """Generate-verify-synthesize refinement of the coarse triple.

    The describer caption (visual-context summary) is fused with the
    templated prior: an informative caption naming the correct
    target/reference pair overrides the prior's spatial relation, anything
    else keeps it. A synthesizer response replaces the triple only when it
    parses as a strict three-key JSON object. Failures never propagate.
    """
    if clients is None or bundle.coarse is None:
        return bundle
    target = episode_context.get("target_label", "")
    reference = episode_context.get("reference_label")
    room = episode_context.get("room_label", "room")
    prior_relation = episode_context.get("prior_relation", "near")
    coarse = dict(bundle.coarse)

    caption = None
    if clients.describer is not None:
        prompt = (f"Describe the {target} in the {room}, focusing on its spatial "
                  f"relation to the {reference or 'nearby objects'}. Path context: "
                  f"{episode_context.get('path_summary', '')}")
        caption = _try_client(clients.describer, prompt, episode_context)
    if clients.verifier is not None:
        prompt = (f"Cross-check this caption against the prior relation "
                  f"{prior_relation!r} between {target} and {reference}: "
                  f"{caption or ''}")
        verified = _try_client(clients.verifier, prompt, episode_context)
        if verified is not None:
            caption = verified

    if caption_is_informative(caption, target, reference):
        rel = extract_relation(caption, target, reference)
        if rel is not None and rel != prior_relation:
            other = reference if reference else room
            coarse = coarse_templates(target, f"{rel} the {other}", room)

    if clients.synthesizer is not None:
        prompt = (f"Rewrite as formal/natural/casual JSON: "
                  f"{coarse['formal']}")
        text = _try_client(clients.synthesizer, prompt, episode_context)
        if text is not None:
            parsed = parse_synthesizer_output(text)
            if parsed is not None:
                coarse = parsed

    if coarse == bundle.coarse:
        return bundle
    return replace(bundle, coarse=coarse)


def _try_client(client, prompt: str, context: dict) -> str | None:
    try:
        return client.request(prompt, context)
    except Exception:
        return None  # ClientTimeout / SchemaInvalid: fall back to template


def episode_refinement_context(ctx: SceneContext, episode: Episode) -> dict:
    """Context dict handed to refinement clients for one episode."""
    target_label = None
    reference_label = None
    prior_relation = None
    room_label = None
    goal = episode.goals[-1]
    if goal.target_object_id is not None:
        obj = ctx.scene.object(goal.target_object_id)
        target_label = obj.label
        edge = ctx.graph.strongest_relation(obj.object_id)
        if edge is not None:
            prior_relation = edge[1].lower()
            reference_label = (ctx.scene.room(edge[2]).label if edge[1] == IN
                               else ctx.scene.object(edge[2]).label)
        for _, rel, other in ctx.graph.edges_of(obj.object_id):
            if rel == IN:
                room_label = ctx.scene.room(other).label
                break
    pose = _goal_pose(episode.reference_path)
    seen = [d.label for d in ctx.observation_at(pose).detections][:8]
    return {
        "task_type": episode.task_type,
        "target_label": target_label,
        "reference_label": reference_label,
        "prior_relation": prior_relation,
        "room_label": room_label or "room",
        "path_summary": ", ".join(seen),
    }


# ---------------------------------------------------------------------------
# Episode invariants and serialization
# ---------------------------------------------------------------------------

def validate_episode(ctx: SceneContext, ep: Episode) -> None:
    """Re-verify the Episode invariants against the scene grids."""
    if ep.task_type not in TASK_TYPES:
        raise EpisodeInvariantError(f"unknown task type {ep.task_type!r}")
    ep.instruction_bundle.check(ep.task_type)
    n_goals = len(ep.goals)
    if ep.task_type == TASK_LONG_HORIZON:
        if not 2 <= n_goals <= 3:
            raise EpisodeInvariantError("long-horizon episodes need 2-3 goals")
    elif n_goals != 1:
        raise EpisodeInvariantError(f"{ep.task_type} episodes need exactly 1 goal")
    nav = ctx.nav_grid
    if nav.is_occupied(ep.start.xy):
        raise EpisodeInvariantError("start pose not free on the dilated grid")
    for g in ep.goals:
        if nav.is_occupied(g.point):
            raise EpisodeInvariantError("goal point not free on the dilated grid")
    wp = ep.reference_path.waypoints
    if math.hypot(wp[0][0] - ep.start.x, wp[0][1] - ep.start.y) > 2 * nav.resolution:
        raise EpisodeInvariantError("reference path does not begin at the start pose")
    if math.hypot(wp[-1][0] - ep.goals[-1].point[0],
                  wp[-1][1] - ep.goals[-1].point[1]) > 2 * nav.resolution:
        raise EpisodeInvariantError("reference path does not end at the final goal")
    if not math.isclose(ep.reference_path.length, polyline_length(wp),
                        rel_tol=1e-9, abs_tol=1e-9):
        raise EpisodeInvariantError("reference path length mismatch")


def episode_to_dict(ep: Episode) -> dict:
    b = ep.instruction_bundle
    bundle = {"oracle_enabled": b.oracle_enabled}
    if b.fine is not None:
        bundle["fine"] = b.fine
    if b.coarse is not None:
        bundle["coarse"] = dict(b.coarse)
    if b.goal_snapshot is not None:
        s = b.goal_snapshot
        bundle["goal_snapshot"] = {
            "captured_at": [s.captured_at.x, s.captured_at.y, s.captured_at.yaw],
            "visible": [[lbl, br, rng] for lbl, br, rng in s.visible],
        }
    if b.sub_instructions is not None:
        bundle["sub_instructions"] = list(b.sub_instructions)
    return {
        "episode_id": ep.episode_id,
        "scene_id": ep.scene_id,
        "task_type": ep.task_type,
        "instruction_bundle": bundle,
        "start": [ep.start.x, ep.start.y, ep.start.yaw],
        "goals": [{"point": [g.point[0], g.point[1]],
                   "target_object_id": g.target_object_id} for g in ep.goals],
        "reference_path": {
            "waypoints": [[float(x), float(y)] for x, y in ep.reference_path.waypoints],
            "length": ep.reference_path.length,
            "straight_steps": ep.reference_path.straight_steps,
            "diagonal_steps": ep.reference_path.diagonal_steps,
        },
        "success_thresh": ep.success_thresh,
        "verified": ep.verified,
    }


def episode_from_dict(doc: dict) -> Episode:
    b = doc["instruction_bundle"]
    snapshot = None
    if "goal_snapshot" in b:
        s = b["goal_snapshot"]
        snapshot = GoalSnapshot(
            Pose(*s["captured_at"]),
            tuple((lbl, br, rng) for lbl, br, rng in s["visible"]))
    bundle = InstructionBundle(
        fine=b.get("fine"),
        coarse=b.get("coarse"),
        goal_snapshot=snapshot,
        sub_instructions=tuple(b["sub_instructions"]) if "sub_instructions" in b else None,
        oracle_enabled=b.get("oracle_enabled", False),
    )
    rp = doc["reference_path"]
    path = PlannedPath(np.asarray(rp["waypoints"], dtype=float), rp["length"],
                       rp["straight_steps"], rp["diagonal_steps"])
    return Episode(
        episode_id=doc["episode_id"],
        scene_id=doc["scene_id"],
        task_type=doc["task_type"],
        instruction_bundle=bundle,
        start=Pose(*doc["start"]),
        goals=tuple(Goal((g["point"][0], g["point"][1]), g.get("target_object_id"))
                    for g in doc["goals"]),
        reference_path=path,
        success_thresh=doc["success_thresh"],
        verified=doc.get("verified", False),
    )


def episodes_to_jsonl(episodes) -> str:
    return "".join(json.dumps(episode_to_dict(ep), sort_keys=True) + "\n"
                   for ep in episodes)


def episodes_from_jsonl(text: str) -> list[Episode]:
    return [episode_from_dict(json.loads(line))
            for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Dataset building
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSplit:
    name: str
    scene_ids: tuple
    episode_ids: tuple


@dataclass
class Dataset:
    manifest: dict
    episodes_by_split: dict  # split name -> list[Episode]

    def split(self, name: str) -> list:
        return self.episodes_by_split[name]

    def split_info(self, name: str) -> DatasetSplit:
        info = self.manifest["splits"][name]
        return DatasetSplit(name, tuple(info["scenes"]), tuple(info["episodes"]))

    def all_episodes(self):
        for eps in self.episodes_by_split.values():
            yield from eps


def split_scene_counts(n_scenes: int, ratios=SPLIT_RATIOS) -> tuple[int, int, int]:
    """Scale the train:val_unseen:test scene ratio; train takes the remainder."""
    total = sum(ratios)
    val_unseen = max(1, round(n_scenes * ratios[1] / total))
    test = max(1, round(n_scenes * ratios[2] / total))
    train = n_scenes - val_unseen - test
    if train < 1:
        raise ValueError(f"need at least 3 scenes, got {n_scenes}")
    return train, val_unseen, test


def scene_rng(dataset_seed: int, scene_id: str) -> np.random.Generator:
    """Deterministic per-scene stream, independent of generation order."""
    return np.random.default_rng(
        np.random.SeedSequence([dataset_seed, zlib.crc32(scene_id.encode())]))


DEFAULT_PER_SCENE = {"fine": 2, "coarse": 2, "long_horizon": 1}


def build_dataset(scenes, per_scene_counts=None, seed: int = 0,
                  constraints=DEFAULT_GEODESIC_RANGE,
                  success_thresh=DEFAULT_SUCCESS_THRESH,
                  ratios=SPLIT_RATIOS,
                  val_seen_fraction: float = 0.25,
                  clients: RefinementClients | None = None,
                  contexts: dict | None = None) -> Dataset:
    """Generate the five-task episode dataset over a scene collection.

    Coarse, visual-reference, and dialogue episodes share trajectories;
    long-horizon chains 2-3 goal legs. val_seen holds extra episodes from
    train scenes; train/val_unseen/test scene sets are disjoint.
    """
    counts = dict(DEFAULT_PER_SCENE)
    if per_scene_counts:
        counts.update(per_scene_counts)
    scenes = sorted(scenes, key=lambda s: s.scene_id)
    if len({s.scene_id for s in scenes}) != len(scenes):
        raise ValueError("scene_ids must be unique")
    n_train, n_val_unseen, n_test = split_scene_counts(len(scenes), ratios)
    order = np.random.default_rng(np.random.SeedSequence([seed, 0])).permutation(len(scenes))
    shuffled = [scenes[int(i)] for i in order]
    scene_sets = {
        "train": shuffled[:n_train],
        "val_unseen": shuffled[n_train:n_train + n_val_unseen],
        "test": shuffled[n_train + n_val_unseen:],
    }
    episodes_by_split = {"train": [], "val_seen": [], "val_unseen": [], "test": []}
    val_seen_scenes = set()

    for split_name in ("train", "val_unseen", "test"):
        for scene in scene_sets[split_name]:
            ctx = (contexts or {}).get(scene.scene_id) or SceneContext(scene)
            rng = scene_rng(seed, scene.scene_id)
            batches = [(split_name, counts)]
            if split_name == "train" and val_seen_fraction > 0:
                vs_counts = {k: max(1, math.ceil(v * val_seen_fraction))
                             for k, v in counts.items()}
                batches.append(("val_seen", vs_counts))
                val_seen_scenes.add(scene.scene_id)
            for target_split, batch_counts in batches:
                tag = "" if target_split != "val_seen" else "vs"
                episodes_by_split[target_split].extend(
                    _scene_episodes(ctx, rng, batch_counts, constraints,
                                    success_thresh, tag, clients))

    splits = {}
    for name, eps in episodes_by_split.items():
        if name == "val_seen":
            scene_ids = tuple(sorted(val_seen_scenes))
        else:
            scene_ids = tuple(sorted(s.scene_id for s in scene_sets[name]))
        splits[name] = {
            "scenes": list(scene_ids),
            "episodes": [ep.episode_id for ep in eps],
        }
    manifest = {
        "seed": seed,
        "generator_version": GENERATOR_VERSION,
        "style_expansion": 3,  # coarse carries three styles in one episode
        "per_scene_counts": counts,
        "geodesic_range": list(constraints),
        "success_thresh": success_thresh,
        "splits": splits,
    }
    return Dataset(manifest, episodes_by_split)


def _scene_episodes(ctx, rng, counts, constraints, success_thresh, tag, clients):
    out = []
    sid = ctx.scene.scene_id
    for k in range(counts.get("fine", 0)):
        out.append(make_fine_episode(
            ctx, f"{sid}:fine:{tag}{k:04d}", rng, constraints, success_thresh))
    goal_families = []
    for k in range(counts.get("coarse", 0)):
        fam = make_goal_episode_family(
            ctx, f"{sid}:goal:{tag}{k:04d}", rng, constraints, success_thresh)
        if clients is not None:
            fam = {t: _refined(ctx, ep, clients) for t, ep in fam.items()}
        goal_families.append(fam)
        out.extend(fam[t] for t in (TASK_COARSE, TASK_VISUAL_REF, TASK_DIALOGUE))
    for k in range(counts.get("long_horizon", 0)):
        n_goals = int(rng.integers(2, 4))
        legs = [make_goal_episode_family(
            ctx, f"{sid}:lhleg:{tag}{k:04d}.{i}", rng,
            constraints, success_thresh)[TASK_COARSE] for i in range(n_goals)]
        out.append(chain_long_horizon(
            ctx, legs, f"{sid}:long_horizon:{tag}{k:04d}", success_thresh))
    for ep in out:
        validate_episode(ctx, ep)
    return out


def _refined(ctx, ep, clients):
    bundle = refine(ep.instruction_bundle, episode_refinement_context(ctx, ep), clients)
    return replace(ep, instruction_bundle=bundle) if bundle is not ep.instruction_bundle else ep


def save_dataset(dataset: Dataset, out_dir) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)
    manifest = dict(dataset.manifest)
    for name, eps in dataset.episodes_by_split.items():
        fname = f"episodes_{name}.jsonl"
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as f:
            f.write(episodes_to_jsonl(eps))
        manifest["splits"][name]["path"] = fname
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_dataset(out_dir) -> Dataset:
    import os

    with open(os.path.join(out_dir, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    episodes_by_split = {}
    for name, info in manifest["splits"].items():
        with open(os.path.join(out_dir, info["path"]), "r", encoding="utf-8") as f:
            episodes_by_split[name] = episodes_from_jsonl(f.read())
    return Dataset(manifest, episodes_by_split)
