import json
import math

import numpy as np
import pytest

from navbench.agents import OracleFollower
from navbench.episodes import (
    SceneContext,
    make_fine_episode,
    make_goal_episode_family,
    TASK_COARSE,
    TASK_DIALOGUE,
)
from navbench.generator import GeneratorParams, generate_scene
from navbench.metrics import score_episode
from navbench.service import (
    ServiceState,
    Session,
    WireClient,
    WireServer,
    observation_payload,
    parse_action,
    serve_stdio,
)
from navbench.simulator import Pose, SimConfig, Simulator


@pytest.fixture(scope="module")
def world():
    scene = generate_scene(GeneratorParams(), 31)
    ctx = SceneContext(scene)
    rng = np.random.default_rng(1)
    fam = make_goal_episode_family(ctx, "fam", rng)
    fine = make_fine_episode(ctx, "fine0", rng)
    episodes = [fine, fam[TASK_COARSE], fam[TASK_DIALOGUE]]
    state = ServiceState([scene], episodes, SimConfig(mode="telhop"))
    return scene, ctx, episodes, state


@pytest.fixture()
def server(world):
    _, _, _, state = world
    srv = WireServer(state, "127.0.0.1", 0)
    srv.serve_in_thread()
    yield srv
    srv.shutdown()


def connect(srv):
    return WireClient(*srv.address)


# ---------------------------------------------------------------------------
# Protocol basics
# ---------------------------------------------------------------------------

def test_hello_reset_loop_done(world, server):
    _, ctx, episodes, _ = world
    ep = episodes[0]
    client = connect(server)
    try:
        hello = client.request("hello")
        assert hello["kind"] == "hello"
        assert hello["payload"]["version"] == "1"
        first = client.request("reset", {"episode_id": ep.episode_id})
        assert first["kind"] == "observation"
        header = first["payload"]["episode"]
        assert header["episode_id"] == ep.episode_id
        assert header["instruction_bundle"]["fine"]
        assert first["payload"]["observation"]["pose"] == [ep.start.x, ep.start.y,
                                                           ep.start.yaw]
        # drive with the oracle follower through the wire
        sim_shadow = Simulator(ctx.scene, SimConfig(mode="telhop"))
        agent = OracleFollower()
        obs0 = sim_shadow.reset(ep)
        agent.begin(ep, sim_shadow)
        obs = obs0
        reply = first
        for _ in range(200):
            action = agent.act(obs)
            obs = sim_shadow.step(action).observation
            reply = client.request("action", {"action": _to_wire(action)})
            if reply["kind"] == "done":
                break
        assert reply["kind"] == "done"
        assert reply["payload"]["reason"] == "stopped"
        assert reply["payload"]["result"]["metrics"]["SR"] == 1
    finally:
        client.close()


def _to_wire(action):
    from navbench.simulator import Continuous, Discrete, WaypointHop

    if isinstance(action, Discrete):
        return {"type": "discrete", "primitive": action.primitive}
    if isinstance(action, Continuous):
        return {"type": "continuous", "v": action.v, "omega": action.omega,
                "dt": action.dt}
    if isinstance(action, WaypointHop):
        return {"type": "hop", "target": list(action.target)}
    raise AssertionError(action)


def test_unknown_episode_error(server):
    client = connect(server)
    try:
        reply = client.request("reset", {"episode_id": "nope"})
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == "unknown_episode"
    finally:
        client.close()


def test_action_before_reset(server):
    client = connect(server)
    try:
        reply = client.request("action", {"action": {"type": "discrete",
                                                     "primitive": "STOP"}})
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == "no_episode"
    finally:
        client.close()


def test_seq_must_increase(server):
    client = connect(server)
    try:
        client.request("hello")
        reply = client.send_raw(json.dumps({"kind": "hello", "seq": 1, "payload": {}}))
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == "bad_seq"
        assert reply["payload"]["offending_seq"] == 1
    finally:
        client.close()


def test_malformed_json_gets_error_reply(server):
    client = connect(server)
    try:
        reply = client.send_raw("this is not json {")
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == "malformed_json"
    finally:
        client.close()


def test_oracle_query_flow(world, server):
    _, ctx, episodes, _ = world
    dlg = episodes[2]
    fine = episodes[0]
    client = connect(server)
    try:
        client.request("reset", {"episode_id": dlg.episode_id})
        target = ctx.scene.object(dlg.goals[-1].target_object_id)
        reply = client.request("oracle_query", {"text": f"where is the {target.label}?"})
        assert reply["kind"] == "oracle_answer"
        assert reply["payload"]["hint"]["geodesic_remaining"] > 0
        # non-dialogue episodes refuse
        client.request("reset", {"episode_id": fine.episode_id})
        reply = client.request("oracle_query", {"text": "where?"})
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == "oracle_disabled"
    finally:
        client.close()


def test_concurrent_sessions_isolated(world, server):
    _, _, episodes, _ = world
    a, b = connect(server), connect(server)
    try:
        ra = a.request("reset", {"episode_id": episodes[0].episode_id})
        rb = b.request("reset", {"episode_id": episodes[1].episode_id})
        assert ra["session_id"] != rb["session_id"]
        fa = a.request("action", {"action": {"type": "discrete", "primitive": "FORWARD"}})
        fb = b.request("action", {"action": {"type": "discrete", "primitive": "TURN_LEFT"}})
        assert fa["payload"]["observation"]["step_index"] == 1
        assert fb["payload"]["observation"]["step_index"] == 1
        # poses evolve independently per episode
        assert fa["payload"]["observation"]["pose"] != fb["payload"]["observation"]["pose"]
    finally:
        a.close()
        b.close()


# ---------------------------------------------------------------------------
# Fuzzing and live/offline equality (smaller versions of the acceptance gates)
# ---------------------------------------------------------------------------

def test_fuzz_messages_never_crash(world):
    _, _, episodes, state = world
    session = Session(state)
    rng = np.random.default_rng(0)
    payload_pool = [
        "", "{", "[]", "null", '{"kind": 7}', '{"seq": "x", "kind": "hello"}',
        json.dumps({"kind": "reset", "seq": 10 ** 9, "payload": {"episode_id": 5}}),
        json.dumps({"kind": "action", "seq": 2 * 10 ** 9,
                    "payload": {"action": {"type": "continuous", "v": "NaN"}}}),
    ]
    replies = 0
    for i in range(1500):
        if rng.random() < 0.5:
            line = payload_pool[int(rng.integers(len(payload_pool)))]
        else:
            line = json.dumps({
                "kind": str(rng.choice(["hello", "reset", "action", "oracle_query",
                                        "bogus"])),
                "seq": int(rng.integers(-5, 10 ** 6)),
                "payload": {"episode_id": "x", "action": {"type": "discrete",
                                                          "primitive": "FORWARD"}},
            })
        reply = session.handle_line(line)
        doc = json.loads(reply)  # reply is always valid JSON
        assert doc["kind"] in ("hello", "observation", "done", "oracle_answer", "error")
        replies += 1
    assert replies == 1500


def test_live_equals_offline_scoring(world, server):
    _, ctx, episodes, _ = world
    ep = episodes[1]
    client = connect(server)
    try:
        client.request("reset", {"episode_id": ep.episode_id})
        shadow = Simulator(ctx.scene, SimConfig(mode="telhop"))
        agent = OracleFollower()
        obs = shadow.reset(ep)
        agent.begin(ep, shadow)
        reply = None
        for _ in range(200):
            action = agent.act(obs)
            obs = shadow.step(action).observation
            reply = client.request("action", {"action": _to_wire(action)})
            if reply["kind"] == "done":
                break
        live = reply["payload"]["result"]["metrics"]
        offline = score_episode(ep, shadow.trajectory, ctx.nav_grid, ctx.cache).metrics
        for key in ("TL", "NE", "SR", "OSR", "SPL", "nDTW", "CR"):
            assert live[key] == offline[key], key
    finally:
        client.close()


def test_stdio_mode(world):
    import io

    _, _, episodes, state = world
    lines = [
        json.dumps({"kind": "hello", "seq": 1, "payload": {}}),
        json.dumps({"kind": "reset", "seq": 2,
                    "payload": {"episode_id": episodes[0].episode_id}}),
        json.dumps({"kind": "action", "seq": 3,
                    "payload": {"action": {"type": "discrete", "primitive": "STOP"}}}),
    ]
    out = io.StringIO()
    serve_stdio(state, io.StringIO("\n".join(lines) + "\n"), out)
    replies = [json.loads(l) for l in out.getvalue().strip().splitlines()]
    assert [r["kind"] for r in replies] == ["hello", "observation", "done"]


def test_parse_action_rejects_bad_payloads():
    with pytest.raises(ValueError):
        parse_action({"type": "discrete", "primitive": "FLY"})
    with pytest.raises(ValueError):
        parse_action({"type": "continuous", "v": float("nan"), "omega": 0, "dt": 0.1})
    with pytest.raises(ValueError):
        parse_action({"type": "hop", "target": [1]})
    with pytest.raises(ValueError):
        parse_action("stop")


def test_reset_header_carries_scene_and_agent(world, server):
    _, ctx, episodes, _ = world
    ep = episodes[0]
    client = connect(server)
    try:
        reply = client.request("reset", {"episode_id": ep.episode_id})
        payload = reply["payload"]
        assert payload["scene"]["scene_id"] == ep.scene_id
        assert payload["scene"]["rooms"]
        header = payload["episode"]
        assert header["agent"]["radius"] == 0.30
        assert header["agent"]["max_linear_speed"] == 1.0
        assert header["mode"] == "telhop"
        assert header["reference_path"][0] == [ep.start.x, ep.start.y]
    finally:
        client.close()


def test_done_carries_trajectory_csv(world, server):
    from navbench.simulator import trajectory_from_csv

    _, _, episodes, _ = world
    client = connect(server)
    try:
        client.request("reset", {"episode_id": episodes[0].episode_id})
        client.request("action", {"action": {"type": "discrete",
                                             "primitive": "FORWARD"}})
        done = client.request("action", {"action": {"type": "discrete",
                                                    "primitive": "STOP"}})
        assert done["kind"] == "done"
        csv_text = done["payload"]["result"]["trajectory_csv"]
        traj = trajectory_from_csv(csv_text)
        ts = [t for t, _ in traj.samples]
        assert ts[0] == 0.0
        for a, b in zip(ts, ts[1:]):
            assert abs((b - a) - 0.05) < 1e-9
    finally:
        client.close()
