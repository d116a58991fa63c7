"""Templated navigation-instruction synthesis and validation.

Fine-grained instructions are second-person imperative, built from path
legs and scene landmarks; they always carry four elements: a landmark, a
spatial term, an action verb, and an end-point clause. Coarse instructions
come in three styles (formal, natural, casual) built from the target's
room, label, and one spatial relation. A lexical validator enforces the
element set and rejects third-person narration.

Optional external refinement clients (describer / verifier / synthesizer)
can replace templated content; every client failure falls back to the
template, so generation works fully offline.
"""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from navbench.metrics import downsample
from navbench.scene import IN, NEAR, ON

ACTION_VERBS = (
    "walk", "go", "turn", "head", "continue", "enter", "pass", "proceed",
    "move", "stop", "stay", "find", "locate", "reach", "cross", "follow",
)
SPATIAL_TERMS = (
    "left", "right", "ahead", "front", "behind", "past", "through", "near",
    "on", "in", "beside", "toward", "next to", "by",
)
# Third-person narration is never allowed in fine instructions.
FORBIDDEN_WORDS = (
    "walks", "moves", "enters", "proceeds", "turns", "goes", "continues",
    "heads", "passes", "stops",
)
FORBIDDEN_PHRASES = ("move backward",)

RELATION_WORDS = ("on", "in", "near", "under", "beside", "next to", "by",
                  "behind", "above", "at")

LANDMARK_RADIUS = 2.0  # how far a fine-instruction landmark may sit from the path
LEG_TURN_THRESHOLD = math.pi / 4  # heading change that starts a new leg
LEG_SPACING = 0.75  # path down-sampling before leg extraction


def _word_in(text: str, word: str) -> bool:
    return re.search(rf"\b{re.escape(word)}\b", text, re.IGNORECASE) is not None


def fine_instruction_issues(text: str, landmark_vocab) -> list[str]:
    """Lexical four-element check; returns a list of problems (empty = valid)."""
    issues = []
    if not any(_word_in(text, lm) for lm in landmark_vocab):
        issues.append("missing landmark")
    if not any(_word_in(text, t) for t in SPATIAL_TERMS):
        issues.append("missing spatial term")
    if not any(_word_in(text, v) for v in ACTION_VERBS):
        issues.append("missing action verb")
    if not (_word_in(text, "stop") or _word_in(text, "stay")):
        issues.append("missing end-point clause")
    for w in FORBIDDEN_WORDS:
        if _word_in(text, w):
            issues.append(f"third-person verb {w!r}")
    for p in FORBIDDEN_PHRASES:
        if p in text.lower():
            issues.append(f"forbidden phrase {p!r}")
    return issues


# ---------------------------------------------------------------------------
# Fine-grained template
# ---------------------------------------------------------------------------

def _bearing(a, b) -> float:
    return math.atan2(b[1] - a[1], b[0] - a[0])


def _wrap(a: float) -> float:
    a = math.fmod(a + math.pi, 2 * math.pi)
    return a + 2 * math.pi - math.pi if a < 0 else a - math.pi


def _legs(waypoints) -> list[tuple]:
    """Split a path into straight-ish legs at heading changes >= 45 deg.
    Returns (start point, end point, heading) per leg."""
    pts = downsample(waypoints, LEG_SPACING)
    if len(pts) < 2:
        pts = np.asarray(waypoints, dtype=float)[[0, -1]]
    headings = [_bearing(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    legs = []
    leg_start = 0
    for i in range(1, len(headings)):
        if abs(_wrap(headings[i] - headings[i - 1])) >= LEG_TURN_THRESHOLD:
            legs.append((pts[leg_start], pts[i], _bearing(pts[leg_start], pts[i])))
            leg_start = i
    legs.append((pts[leg_start], pts[-1], _bearing(pts[leg_start], pts[-1])))
    return legs


def _nearest_object(scene, point, max_range=LANDMARK_RADIUS, exclude=()):
    best = None
    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        if obj.object_id in exclude:
            continue
        c = obj.footprint.center
        d = math.hypot(c[0] - point[0], c[1] - point[1])
        if d <= max_range and (best is None or d < best[0]):
            best = (d, obj)
    return best[1] if best else None


def _room_at(scene, point):
    for room in scene.rooms:
        if room.footprint.contains_point(point):
            return room
    return None


def _side_of(leg_heading, leg_point, landmark_center) -> str:
    dx = landmark_center[0] - leg_point[0]
    dy = landmark_center[1] - leg_point[1]
    cross = math.cos(leg_heading) * dy - math.sin(leg_heading) * dx
    return "left" if cross > 0 else "right"


_STRAIGHT_VERBS = ("Walk forward", "Continue straight", "Go straight ahead")


def make_fine_instruction(path, scene_graph, scene) -> str:
    """Deterministic second-person route description with landmarks, sides,
    turns, and a closing stop clause."""
    waypoints = np.asarray(path.waypoints, dtype=float)
    if len(waypoints) < 2:
        raise ValueError("path must have at least 2 waypoints")
    legs = _legs(waypoints)
    sentences = []
    prev_heading = None
    for i, (a, b, heading) in enumerate(legs):
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        landmark = _nearest_object(scene, mid)
        if i == 0:
            verb = _STRAIGHT_VERBS[0]
        else:
            turn = "left" if _wrap(heading - prev_heading) > 0 else "right"
            verb = f"Turn {turn}, then {_STRAIGHT_VERBS[i % len(_STRAIGHT_VERBS)].lower()}"
        if landmark is not None:
            side = _side_of(heading, mid, landmark.footprint.center)
            sentences.append(f"{verb} with the {landmark.label} on your {side}.")
        else:
            room = _room_at(scene, mid)
            if room is not None:
                sentences.append(f"{verb} through the {room.label}.")
            else:
                sentences.append(f"{verb}.")
        prev_heading = heading
    goal = tuple(waypoints[-1])
    target = _nearest_object(scene, goal)
    if target is not None:
        sentences.append(f"Stop near the {target.label}.")
    else:
        room = _room_at(scene, goal)
        label = room.label if room is not None else "room"
        sentences.append(f"Stop in the {label}.")
    return " ".join(sentences)


# ---------------------------------------------------------------------------
# Coarse-grained templates (three styles)
# ---------------------------------------------------------------------------

def relation_phrase(relation: str, other_label: str) -> str:
    if relation == ON:
        return f"on the {other_label}"
    if relation == NEAR:
        return f"near the {other_label}"
    return f"in the {other_label}"


def coarse_templates(target_label: str, rel_phrase: str, room_label: str) -> dict:
    """Formal / natural / casual instruction triple; all three name the
    target and are pairwise distinct."""
    return {
        "formal": f"Proceed to the {room_label} and locate the {target_label} "
                  f"{rel_phrase}.",
        "natural": f"Please head to the {room_label} and find the {target_label} "
                   f"{rel_phrase}.",
        "casual": f"The {target_label} {rel_phrase}, over in the {room_label} -- "
                  f"go find it.",
    }


def make_coarse_instructions(goal_object, scene_graph, scene) -> dict:
    """Instruction triple from the target's strongest scene-graph relation."""
    edge = scene_graph.strongest_relation(goal_object.object_id)
    if edge is None:
        raise ValueError(f"goal object {goal_object.object_id!r} has no scene-graph edge")
    _, relation, other_id = edge
    if relation == IN:
        other_label = scene.room(other_id).label
    else:
        other_label = scene.object(other_id).label
    room_label = _room_label_of(scene, scene_graph, goal_object)
    return coarse_templates(goal_object.label, relation_phrase(relation, other_label),
                            room_label)


def _room_label_of(scene, scene_graph, obj) -> str:
    for _, rel, other in scene_graph.edges_of(obj.object_id):
        if rel == IN:
            return scene.room(other).label
    if obj.room_id != "none":
        return scene.room(obj.room_id).label
    return "hallway"


# ---------------------------------------------------------------------------
# Refinement clients (optional external services)
# ---------------------------------------------------------------------------

class RefinementError(Exception):
    pass


class RefinementClient:
    """External text-generation endpoint for one pipeline role."""

    role: str

    def request(self, prompt: str, context: dict) -> str:
        raise NotImplementedError


class HttpRefinementClient(RefinementClient):
    """POST {role, prompt, context} as JSON, expect {"text": ...} back.
    Endpoint/token come from REFINEMENT_ENDPOINT / REFINEMENT_TOKEN unless
    given explicitly."""

    def __init__(self, role: str, endpoint: str | None = None,
                 token: str | None = None, timeout: float = 10.0):
        self.role = role
        self.endpoint = endpoint or os.environ.get("REFINEMENT_ENDPOINT", "")
        self.token = token if token is not None else os.environ.get("REFINEMENT_TOKEN", "")
        self.timeout = timeout
        if not self.endpoint:
            raise RefinementError("no refinement endpoint configured")

    def request(self, prompt: str, context: dict) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"role": self.role, "prompt": prompt, "context": context},
                headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            doc = resp.json()
        except Exception as e:  # timeouts, HTTP errors, bad JSON: all fall back
            raise RefinementError(str(e)) from e
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise RefinementError("response missing 'text'")
        return doc["text"]


UNINFORMATIVE_MARKERS = ("not clearly visible", "not visible", "unclear",
                         "image is unclear", "cannot see")


def caption_is_informative(caption: str | None, target_label: str,
                           reference_label: str | None) -> bool:
    """A caption can override the prior only if it is informative and names
    the correct target/reference pair."""
    if not caption:
        return False
    low = caption.lower()
    if any(m in low for m in UNINFORMATIVE_MARKERS):
        return False
    if not _word_in(caption, target_label):
        return False
    if reference_label is not None and not _word_in(caption, reference_label):
        return False
    return True


def extract_relation(caption: str, target_label: str,
                     reference_label: str | None) -> str | None:
    """First spatial-relation keyword appearing between the target mention
    and the reference mention (or after the target when no reference)."""
    low = caption.lower()
    t = low.find(target_label.lower())
    if t < 0:
        return None
    tail = low[t + len(target_label):]
    if reference_label is not None:
        r = tail.find(reference_label.lower())
        if r < 0:
            return None
        tail = tail[:r]
    best = None
    for rel in RELATION_WORDS:
        m = re.search(rf"\b{re.escape(rel)}\b", tail)
        if m and (best is None or m.start() < best[0]):
            best = (m.start(), rel)
    return best[1] if best else None


def parse_synthesizer_output(text: str) -> dict | None:
    """Strict three-key JSON object {formal, natural, casual}; anything else
    is rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return None
    if not isinstance(doc, dict) or set(doc) != {"formal", "natural", "casual"}:
        return None
    if not all(isinstance(v, str) and v.strip() for v in doc.values()):
        return None
    return {k: doc[k] for k in ("formal", "natural", "casual")}
