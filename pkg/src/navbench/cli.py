"""Command-line surface.

Subcommands: gen-scenes, gen-episodes, run, eval, serve, human-session,
import-scores. Failures exit non-zero with one machine-parsable line on
stderr (``error: <code>: <detail>``) and partial outputs are removed.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import shutil
import sys
import tempfile
import threading

from navbench import episodes as ep_mod
from navbench.agents import make_agent, run_episode
from navbench.episodes import SceneContext, build_dataset, load_dataset, save_dataset
from navbench.generator import GeneratorParams, generate_scene
from navbench.metrics import (
    aggregate,
    report_to_csv,
    report_to_json,
    score_episode,
)
from navbench.scene import load_scene, save_scene
from navbench.simulator import (
    SimConfig,
    Simulator,
    trajectory_from_csv,
    trajectory_to_csv,
)
from navbench.service import (
    ServiceState,
    WebSocketWireServer,
    WireServer,
    serve_stdio,
)


class CliError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def safe_name(episode_id: str) -> str:
    """Episode id to filesystem-safe trajectory file stem."""
    return re.sub(r"[^A-Za-z0-9._-]", "_", episode_id)


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_scenes(scenes_dir: str) -> list:
    if not os.path.isdir(scenes_dir):
        raise CliError("missing_input", f"scene directory {scenes_dir!r} not found")
    paths = sorted(p for p in os.listdir(scenes_dir) if p.endswith(".json"))
    if not paths:
        raise CliError("missing_input", f"no scene files in {scenes_dir!r}")
    return [load_scene(os.path.join(scenes_dir, p)) for p in paths]


def _sim_config(args) -> SimConfig:
    return SimConfig(mode=getattr(args, "mode", "strict"))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_scenes(args) -> int:
    params = GeneratorParams()
    os.makedirs(args.out, exist_ok=True)
    written = []
    try:
        for k in range(args.count):
            scene = generate_scene(params, args.seed + k)
            path = os.path.join(args.out, f"{scene.scene_id}.json")
            save_scene(scene, path)
            written.append(path)
    except BaseException:
        for p in written:
            if os.path.exists(p):
                os.unlink(p)
        raise
    print(f"wrote {len(written)} scenes to {args.out}")
    return 0


def cmd_gen_episodes(args) -> int:
    scenes = _load_scenes(args.scenes)
    tasks = args.tasks.split(",") if args.tasks else ["fine", "coarse", "long_horizon"]
    counts = {t: args.per_scene for t in tasks}
    dataset = build_dataset(scenes, counts, seed=args.seed)
    if os.path.isdir(args.out):
        shutil.rmtree(args.out)
    try:
        save_dataset(dataset, args.out)
    except BaseException:
        shutil.rmtree(args.out, ignore_errors=True)
        raise
    total = sum(len(v) for v in dataset.episodes_by_split.values())
    print(f"wrote {total} episodes to {args.out}")
    return 0


def _iter_split(dataset, split: str):
    if split == "all":
        yield from dataset.all_episodes()
        return
    if split not in dataset.episodes_by_split:
        raise CliError("unknown_split", split)
    yield from dataset.episodes_by_split[split]


def cmd_run(args) -> int:
    scenes = _load_scenes(args.scenes)
    dataset = load_dataset(args.dataset)
    config = SimConfig(mode=args.mode)
    contexts = {}
    results = []
    traj_dir = args.save_trajectories
    if traj_dir:
        os.makedirs(traj_dir, exist_ok=True)
    for i, ep in enumerate(_iter_split(dataset, args.split)):
        ctx = contexts.get(ep.scene_id)
        if ctx is None:
            scene = next((s for s in scenes if s.scene_id == ep.scene_id), None)
            if scene is None:
                raise CliError("missing_scene", ep.scene_id)
            ctx = contexts[ep.scene_id] = SceneContext(scene, config.resolution,
                                                       config.agent)
        sim = Simulator(ctx.scene, config)
        agent = make_agent(args.agent, seed=args.seed + i)
        traj = run_episode(sim, ep, agent)
        results.append(score_episode(ep, traj, ctx.nav_grid, ctx.cache))
        if traj_dir:
            _write_atomic(os.path.join(traj_dir, safe_name(ep.episode_id) + ".csv"),
                          trajectory_to_csv(traj))
    if not results:
        raise CliError("empty_split", args.split)
    report = aggregate(results, {
        "mode": args.mode, "agent": args.agent, "seed": args.seed,
        "split": args.split, "success_thresh": config.success_thresh,
    })
    _write_atomic(args.report, report_to_json(report))
    if args.csv:
        _write_atomic(args.csv, report_to_csv(report))
    agg = report.aggregates
    print(f"episodes={agg['N']} SR={agg['SR']:.2f} OSR={agg['OSR']:.2f} "
          f"SPL={agg['SPL']:.4f} nDTW={agg['nDTW']:.4f} CR={agg['CR']:.4f}")
    return 0


def cmd_eval(args) -> int:
    scenes = _load_scenes(args.scenes)
    dataset = load_dataset(args.dataset)
    contexts = {}
    results = []
    by_stem = {safe_name(ep.episode_id): ep for ep in dataset.all_episodes()}
    files = sorted(p for p in os.listdir(args.trajectories) if p.endswith(".csv"))
    if not files:
        raise CliError("missing_input", f"no trajectory CSVs in {args.trajectories!r}")
    for fname in files:
        stem = fname[:-4]
        ep = by_stem.get(stem)
        if ep is None:
            raise CliError("unknown_trajectory", fname)
        ctx = contexts.get(ep.scene_id)
        if ctx is None:
            scene = next((s for s in scenes if s.scene_id == ep.scene_id), None)
            if scene is None:
                raise CliError("missing_scene", ep.scene_id)
            ctx = contexts[ep.scene_id] = SceneContext(scene)
        with open(os.path.join(args.trajectories, fname), "r", encoding="utf-8") as f:
            traj = trajectory_from_csv(f.read())
        results.append(score_episode(ep, traj, ctx.nav_grid, ctx.cache))
    report = aggregate(results, {"source": "offline-csv",
                                 "trajectories": args.trajectories})
    _write_atomic(args.report, report_to_json(report))
    print(f"scored {len(results)} trajectories -> {args.report}")
    return 0


def _make_state(args) -> ServiceState:
    scenes = _load_scenes(args.scenes)
    dataset = load_dataset(args.dataset)
    episodes = list(dataset.all_episodes())
    return ServiceState(scenes, episodes, SimConfig(mode=args.mode))


def _parse_listen(value: str) -> tuple[str, int]:
    if ":" not in value:
        raise CliError("bad_listen", f"expected HOST:PORT, got {value!r}")
    host, port = value.rsplit(":", 1)
    return host or "127.0.0.1", int(port)


def cmd_serve(args) -> int:
    state = _make_state(args)
    if args.stdio:
        serve_stdio(state)
        return 0
    host, port = _parse_listen(args.listen)
    server = WireServer(state, host, port)
    ws_server = None
    if args.ws_listen:
        ws_host, ws_port = _parse_listen(args.ws_listen)
        ws_server = WebSocketWireServer(state, ws_host, ws_port)
        ws_server.serve_in_thread()
        print(f"websocket on {ws_server.address[0]}:{ws_server.address[1]}", flush=True)
    print(f"listening on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        if ws_server is not None:
            ws_server.shutdown()
    return 0


def cmd_human_session(args) -> int:
    state = _make_state(args)
    if args.episode not in state.episodes:
        raise CliError("unknown_episode", args.episode)
    os.makedirs(args.out, exist_ok=True)
    finished = threading.Event()

    def on_done(session):
        stem = safe_name(session.episode.episode_id)
        _write_atomic(os.path.join(args.out, stem + ".csv"),
                      trajectory_to_csv(session.sim.trajectory))
        report = aggregate([session.result], {
            "mode": state.config.mode, "episode": session.episode.episode_id,
            "source": "human-session",
        })
        _write_atomic(os.path.join(args.out, stem + ".report.json"),
                      report_to_json(report))
        finished.set()

    state.on_episode_done = on_done
    host, port = _parse_listen(args.listen)
    server = WireServer(state, host, port)
    server.serve_in_thread()
    ws_server = None
    if args.ws_listen:
        ws_host, ws_port = _parse_listen(args.ws_listen)
        ws_server = WebSocketWireServer(state, ws_host, ws_port)
        ws_server.serve_in_thread()
        print(f"websocket on {ws_server.address[0]}:{ws_server.address[1]}", flush=True)
    print(f"listening on {server.address[0]}:{server.address[1]} "
          f"for episode {args.episode}", flush=True)
    try:
        finished.wait(timeout=args.timeout if args.timeout > 0 else None)
    except KeyboardInterrupt:
        pass
    server.shutdown()
    if ws_server is not None:
        ws_server.shutdown()
    if not finished.is_set():
        raise CliError("session_timeout", "no completed session")
    print(f"session artifacts in {args.out}")
    return 0


def cmd_import_scores(args) -> int:
    dataset = load_dataset(args.dataset)
    verified = {}
    with open(args.scores, "r", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            if "episode_id" not in row or "verified" not in row:
                raise CliError("bad_scores", "need columns episode_id,verified")
            verified[row["episode_id"]] = row["verified"].strip().lower() in (
                "1", "true", "yes")
    import dataclasses

    n = 0
    for name, eps in dataset.episodes_by_split.items():
        updated = []
        for ep in eps:
            if ep.episode_id in verified:
                ep = dataclasses.replace(ep, verified=verified[ep.episode_id])
                n += 1
            updated.append(ep)
        dataset.episodes_by_split[name] = updated
    save_dataset(dataset, args.dataset)
    print(f"updated verified flag on {n} episodes")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="navbench",
        description="Desk-scale embodied navigation benchmark engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="generate procedural scenes")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("gen-episodes", help="generate an episode dataset")
    p.add_argument("--scenes", required=True)
    p.add_argument("--tasks", default="fine,coarse,long_horizon",
                   help="comma list of base tasks (coarse implies visual_ref"
                        " and dialogue variants)")
    p.add_argument("--per-scene", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_episodes)

    p = sub.add_parser("run", help="roll a baseline agent over a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--agent", default="oracle_follower",
                   choices=["oracle_follower", "random", "greedy"])
    p.add_argument("--mode", default="strict", choices=["strict", "telhop"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--save-trajectories")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score logged trajectory CSVs offline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the agent-in-the-loop service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--mode", default="strict", choices=["strict", "telhop"])
    p.add_argument("--listen", default="127.0.0.1:8808")
    p.add_argument("--ws-listen", dest="ws_listen",
                   help="additional WebSocket endpoint (HOST:PORT)")
    p.add_argument("--stdio", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("human-session",
                       help="serve one teleop episode; write CSV + report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--episode", required=True)
    p.add_argument("--mode", default="strict", choices=["strict", "telhop"])
    p.add_argument("--listen", default="127.0.0.1:8808")
    p.add_argument("--ws-listen", dest="ws_listen",
                   help="additional WebSocket endpoint (HOST:PORT)")
    p.add_argument("--out", required=True)
    p.add_argument("--timeout", type=float, default=0.0,
                   help="seconds to wait for a session (0 = forever)")
    p.set_defaults(func=cmd_human_session)

    p = sub.add_parser("import-scores", help="apply reviewer verification scores")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scores", required=True,
                   help="CSV with columns episode_id,verified")
    p.set_defaults(func=cmd_import_scores)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e.code}: {e.detail}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
