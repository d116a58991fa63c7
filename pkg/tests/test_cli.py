import json
import os
import socket
import threading

import pytest

from navbench.cli import main, safe_name
from navbench.metrics import report_from_json
from navbench.service import WireClient


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenes = root / "scenes"
    dataset = root / "dataset"
    assert main(["gen-scenes", "--count", "4", "--seed", "100",
                 "--out", str(scenes)]) == 0
    assert main(["gen-episodes", "--scenes", str(scenes), "--seed", "7",
                 "--per-scene", "1", "--out", str(dataset)]) == 0
    return root, scenes, dataset


def test_gen_scenes_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-scenes", "--count", "2", "--seed", "5", "--out", str(a)]) == 0
    assert main(["gen-scenes", "--count", "2", "--seed", "5", "--out", str(b)]) == 0
    for name in sorted(os.listdir(a)):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gen_episodes_outputs(workspace):
    _, _, dataset = workspace
    names = set(os.listdir(dataset))
    assert "manifest.json" in names
    for split in ("train", "val_seen", "val_unseen", "test"):
        assert f"episodes_{split}.jsonl" in names
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert manifest["style_expansion"] == 3


def test_run_oracle_follower_and_eval_round_trip(workspace, tmp_path):
    root, scenes, dataset = workspace
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    traj_dir = tmp_path / "trajs"
    code = main(["run", "--dataset", str(dataset), "--scenes", str(scenes),
                 "--split", "test", "--agent", "oracle_follower",
                 "--mode", "strict", "--report", str(report_path),
                 "--csv", str(csv_path), "--save-trajectories", str(traj_dir)])
    assert code == 0
    report = report_from_json(report_path.read_text())
    assert report.aggregates["SR"] == 100.0
    assert report.aggregates["CR"] == 0.0
    assert csv_path.exists()

    # offline eval of the logged CSVs reproduces the pose-derived metrics
    eval_report_path = tmp_path / "offline.json"
    code = main(["eval", "--dataset", str(dataset), "--scenes", str(scenes),
                 "--trajectories", str(traj_dir), "--report", str(eval_report_path)])
    assert code == 0
    offline = report_from_json(eval_report_path.read_text())
    live_by_id = {e["episode_id"]: e for e in report.per_episode}
    for entry in offline.per_episode:
        live = live_by_id[entry["episode_id"]]
        for key in ("SR", "OSR", "NE", "SPL", "nDTW"):
            assert entry[key] == live[key], key


def test_run_unknown_split_fails_cleanly(workspace, tmp_path, capsys):
    _, scenes, dataset = workspace
    code = main(["run", "--dataset", str(dataset), "--scenes", str(scenes),
                 "--split", "nope", "--report", str(tmp_path / "r.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert not (tmp_path / "r.json").exists()


def test_import_scores(workspace, tmp_path):
    _, _, dataset = workspace
    manifest = json.loads((dataset / "manifest.json").read_text())
    some_ids = manifest["splits"]["test"]["episodes"][:2]
    scores = tmp_path / "scores.csv"
    scores.write_text("episode_id,verified\n" +
                      "\n".join(f"{i},true" for i in some_ids) + "\n")
    assert main(["import-scores", "--dataset", str(dataset),
                 "--scores", str(scores)]) == 0
    text = (dataset / "episodes_test.jsonl").read_text()
    flagged = [json.loads(l) for l in text.splitlines()]
    by_id = {e["episode_id"]: e["verified"] for e in flagged}
    for i in some_ids:
        assert by_id[i] is True


def test_human_session_writes_csv_and_report(workspace, tmp_path):
    root, scenes, dataset = workspace
    manifest = json.loads((dataset / "manifest.json").read_text())
    episode_id = manifest["splits"]["test"]["episodes"][0]
    out = tmp_path / "human"

    # run the CLI in a thread on an ephemeral port, then drive one session
    result = {}

    def serve():
        result["code"] = main([
            "human-session", "--dataset", str(dataset), "--scenes", str(scenes),
            "--episode", episode_id, "--mode", "telhop",
            "--listen", "127.0.0.1:0", "--out", str(out), "--timeout", "60",
        ])

    # grab the announced port from stdout via a pipe? simpler: pre-pick a port
    port = _free_port()

    def serve_fixed():
        result["code"] = main([
            "human-session", "--dataset", str(dataset), "--scenes", str(scenes),
            "--episode", episode_id, "--mode", "telhop",
            "--listen", f"127.0.0.1:{port}", "--out", str(out), "--timeout", "60",
        ])

    thread = threading.Thread(target=serve_fixed, daemon=True)
    thread.start()
    client = _connect_retry(port)
    try:
        client.request("hello")
        client.request("reset", {"episode_id": episode_id})
        for _ in range(10):
            client.request("action", {"action": {"type": "continuous", "v": 0.5,
                                                 "omega": 0.3, "dt": 0.1}})
        reply = client.request("action", {"action": {"type": "discrete",
                                                     "primitive": "STOP"}})
        assert reply["kind"] == "done"
    finally:
        client.close()
    thread.join(timeout=30)
    assert result.get("code") == 0
    stem = safe_name(episode_id)
    csv_text = (out / f"{stem}.csv").read_text()
    lines = csv_text.strip().splitlines()
    assert lines[0] == "t,x,y,yaw"
    ts = [float(l.split(",")[0]) for l in lines[1:]]
    # exact 50 ms cadence
    for a, b in zip(ts, ts[1:]):
        assert b - a == pytest.approx(0.05, abs=1e-9)
    report = json.loads((out / f"{stem}.report.json").read_text())
    assert report["aggregates"]["N"] == 1


def _free_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def _connect_retry(port, tries=100):
    import time

    for _ in range(tries):
        try:
            return WireClient("127.0.0.1", port, timeout=30)
        except OSError:
            time.sleep(0.05)
    raise AssertionError("could not connect")
