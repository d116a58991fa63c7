"""Agent-in-the-loop wire service.

Line-delimited JSON messages over TCP (and an equivalent stdin/stdout
mode). Every message is an envelope {kind, session_id, seq, payload};
client sequence numbers must be strictly increasing within a session, and
every request line receives exactly one reply line (observation, done,
oracle_answer, hello, or a structured error carrying the offending seq).
Malformed input never crashes the service.

Session flow: hello -> reset(episode_id) -> loop{observation -> action}
-> done with the scored episode result. Each connection owns one isolated
session; shared data (scenes, episodes, grids) is immutable after load.
"""
from __future__ import annotations

import base64
import hashlib
import itertools
import json
import math
import socket
import socketserver
import struct
import sys
import threading
from dataclasses import dataclass

from navbench.agents import OracleDisabled, oracle_answer
from navbench.episodes import SceneContext
from navbench.metrics import score_episode
from navbench.scene import scene_to_dict
from navbench.simulator import (
    Continuous,
    Discrete,
    EpisodeFinished,
    InvalidEpisode,
    Observation,
    Pose,
    PRIMITIVES,
    SimConfig,
    Simulator,
    UnsupportedAction,
    WaypointHop,
    trajectory_to_csv,
)

PROTOCOL_VERSION = "1"
CLIENT_KINDS = ("hello", "reset", "action", "oracle_query")


class ServiceState:
    """Immutable shared service data: scenes, episodes, grids, config."""

    def __init__(self, scenes, episodes, config: SimConfig = SimConfig()):
        self.config = config
        self.contexts = {s.scene_id: SceneContext(s, config.resolution, config.agent)
                         for s in scenes}
        self.episodes = {}
        for ep in episodes:
            if ep.scene_id not in self.contexts:
                raise ValueError(f"episode {ep.episode_id} references unknown scene"
                                 f" {ep.scene_id}")
            self.episodes[ep.episode_id] = ep
        self._session_counter = itertools.count(1)
        self.on_episode_done = None  # callback(session) after a done reply

    def new_session_id(self) -> str:
        return f"s{next(self._session_counter):05d}"


def observation_payload(obs: Observation) -> dict:
    return {
        "pose": [obs.pose.x, obs.pose.y, obs.pose.yaw],
        "range_scan": [[b, r] for b, r in obs.range_scan],
        "detections": [
            {"object_id": d.object_id, "label": d.label,
             "bearing": d.bearing, "range": d.range}
            for d in obs.detections
        ],
        "step_index": obs.step_index,
        "collided_last_step": obs.collided_last_step,
    }


def parse_action(doc):
    """Wire action object -> simulator action; raises ValueError with a
    message suitable for an error reply."""
    if not isinstance(doc, dict):
        raise ValueError("action must be an object")
    kind = doc.get("type")
    if kind == "discrete":
        prim = doc.get("primitive")
        if prim not in PRIMITIVES:
            raise ValueError(f"unknown primitive {prim!r}")
        return Discrete(prim)
    if kind == "continuous":
        try:
            v = float(doc["v"])
            omega = float(doc["omega"])
            dt = float(doc["dt"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError("continuous action needs numeric v, omega, dt") from e
        if not (math.isfinite(v) and math.isfinite(omega) and math.isfinite(dt)):
            raise ValueError("continuous action values must be finite")
        return Continuous(v, omega, dt)
    if kind == "hop":
        target = doc.get("target")
        if (not isinstance(target, list) or len(target) != 2
                or not all(isinstance(c, (int, float)) and math.isfinite(c)
                           and not isinstance(c, bool) for c in target)):
            raise ValueError("hop action needs target [x, y]")
        return WaypointHop((float(target[0]), float(target[1])))
    raise ValueError(f"unknown action type {kind!r}")


def episode_header(ep) -> dict:
    b = ep.instruction_bundle
    bundle = {"oracle_enabled": b.oracle_enabled}
    if b.fine is not None:
        bundle["fine"] = b.fine
    if b.coarse is not None:
        bundle["coarse"] = dict(b.coarse)
    if b.sub_instructions is not None:
        bundle["sub_instructions"] = list(b.sub_instructions)
    if b.goal_snapshot is not None:
        s = b.goal_snapshot
        bundle["goal_snapshot"] = {
            "captured_at": [s.captured_at.x, s.captured_at.y, s.captured_at.yaw],
            "visible": [[l, br, r] for l, br, r in s.visible],
        }
    return {
        "episode_id": ep.episode_id,
        "scene_id": ep.scene_id,
        "task_type": ep.task_type,
        "instruction_bundle": bundle,
        "success_thresh": ep.success_thresh,
        "max_steps": None,  # filled by the session from its config
    }


class Session:
    """One client connection: a single active episode and its simulator."""

    def __init__(self, state: ServiceState):
        self.state = state
        self.session_id = state.new_session_id()
        self.out_seq = 0
        self.last_client_seq = None
        self.ctx = None
        self.sim = None
        self.episode = None
        self.result = None
        self.done_sent = False

    # -- envelope helpers ---------------------------------------------------

    def _reply(self, kind: str, payload: dict, re_seq=None) -> str:
        self.out_seq += 1
        return json.dumps({
            "kind": kind,
            "session_id": self.session_id,
            "seq": self.out_seq,
            "re": re_seq,
            "payload": payload,
        }, sort_keys=True)

    def _error(self, code: str, detail: str, re_seq=None) -> str:
        return self._reply("error", {"code": code, "detail": detail,
                                     "offending_seq": re_seq}, re_seq)

    # -- main entry ----------------------------------------------------------

    def handle_line(self, line: str) -> str:
        """Process one request line, returning exactly one reply line."""
        try:
            return self._dispatch(line)
        except Exception as e:  # safety net: protocol must never crash
            return self._error("internal", f"{type(e).__name__}: {e}")

    def _dispatch(self, line: str) -> str:
        line = line.strip()
        if not line:
            return self._error("malformed_json", "empty line")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            return self._error("malformed_json", str(e))
        if not isinstance(msg, dict):
            return self._error("malformed_message", "message must be an object")
        seq = msg.get("seq")
        if not isinstance(seq, int) or isinstance(seq, bool):
            return self._error("bad_seq", "seq must be an integer", None)
        if self.last_client_seq is not None and seq <= self.last_client_seq:
            return self._error(
                "bad_seq", f"seq {seq} not greater than {self.last_client_seq}", seq)
        self.last_client_seq = seq
        kind = msg.get("kind")
        if kind not in CLIENT_KINDS:
            return self._error("bad_kind", f"unknown kind {kind!r}", seq)
        payload = msg.get("payload")
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            return self._error("bad_payload", "payload must be an object", seq)
        handler = getattr(self, f"_on_{kind}")
        return handler(payload, seq)

    # -- handlers ------------------------------------------------------------

    def _on_hello(self, payload, seq) -> str:
        return self._reply("hello", {
            "server": "navbench",
            "version": PROTOCOL_VERSION,
            "episodes": len(self.state.episodes),
        }, seq)

    def _on_reset(self, payload, seq) -> str:
        episode_id = payload.get("episode_id")
        ep = self.state.episodes.get(episode_id)
        if ep is None:
            return self._error("unknown_episode", f"episode {episode_id!r}", seq)
        ctx = self.state.contexts[ep.scene_id]
        sim = Simulator(ctx.scene, self.state.config)
        try:
            obs = sim.reset(ep)
        except InvalidEpisode as e:
            return self._error("invalid_episode", str(e), seq)
        self.ctx, self.sim, self.episode = ctx, sim, ep
        self.result = None
        self.done_sent = False
        header = episode_header(ep)
        header["max_steps"] = self.state.config.max_steps
        agent = self.state.config.agent
        header["agent"] = {
            "radius": agent.radius,
            "height": agent.height,
            "max_linear_speed": agent.max_linear_speed,
            "max_angular_speed": agent.max_angular_speed,
        }
        header["mode"] = self.state.config.mode
        header["reference_path"] = [[float(x), float(y)]
                                    for x, y in ep.reference_path.waypoints]
        return self._reply("observation", {
            "episode": header,
            "scene": scene_to_dict(ctx.scene),
            "observation": observation_payload(obs),
        }, seq)

    def _require_episode(self, seq):
        if self.sim is None:
            return self._error("no_episode", "send reset first", seq)
        return None

    def _on_action(self, payload, seq) -> str:
        err = self._require_episode(seq)
        if err:
            return err
        if self.sim.done:
            return self._error("episode_finished", "episode already done", seq)
        try:
            action = parse_action(payload.get("action"))
        except ValueError as e:
            return self._error("bad_action", str(e), seq)
        try:
            result = self.sim.step(action)
        except (UnsupportedAction, EpisodeFinished) as e:
            return self._error("unsupported_action", str(e), seq)
        if not result.done:
            return self._reply("observation", {
                "observation": observation_payload(result.observation),
            }, seq)
        scored = score_episode(self.episode, self.sim.trajectory,
                               self.ctx.nav_grid, self.ctx.cache)
        self.result = scored
        self.done_sent = True
        reply = self._reply("done", {
            "reason": result.done_reason,
            "observation": observation_payload(result.observation),
            "result": {
                "episode_id": scored.episode_id,
                "metrics": scored.metrics,
                "per_goal_reached": list(scored.per_goal_reached),
                "stop_pose": [scored.stop_pose.x, scored.stop_pose.y,
                              scored.stop_pose.yaw],
                "num_actions": scored.num_actions,
                "num_collisions": scored.num_collisions,
                # the 50 ms pose log, so teleop clients can save it locally
                "trajectory_csv": trajectory_to_csv(self.sim.trajectory),
            },
        }, seq)
        if self.state.on_episode_done is not None:
            try:
                self.state.on_episode_done(self)
            except Exception:
                pass
        return reply

    def _on_oracle_query(self, payload, seq) -> str:
        err = self._require_episode(seq)
        if err:
            return err
        text = payload.get("text")
        if not isinstance(text, str):
            return self._error("bad_payload", "oracle_query needs text", seq)
        pose = self.sim.trajectory.samples[-1][1]
        try:
            ans = oracle_answer(text, self.ctx, self.episode, pose)
        except OracleDisabled as e:
            return self._error("oracle_disabled", str(e), seq)
        return self._reply("oracle_answer", {
            "text": ans.text,
            "facts_used": list(ans.facts_used),
            "hint": ans.hint,
        }, seq)


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------

class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self):
        session = Session(self.server.state)
        for raw in self.rfile:
            try:
                reply = session.handle_line(raw.decode("utf-8", errors="replace"))
                self.wfile.write(reply.encode("utf-8") + b"\n")
                self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                break


class WireServer(socketserver.ThreadingTCPServer):
    """TCP endpoint speaking one JSON message per line; one session per
    connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, state: ServiceState, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _TcpHandler)
        self.state = state

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve_stdio(state: ServiceState, stdin=None, stdout=None) -> None:
    """Single-session standard-stream mode: one message per line."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    session = Session(state)
    for line in stdin:
        stdout.write(session.handle_line(line) + "\n")
        stdout.flush()


# ---------------------------------------------------------------------------
# WebSocket bridge (same protocol, one message per text frame) so browser
# clients can participate; RFC 6455 server side, no extensions.
# ---------------------------------------------------------------------------

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_encode_text(payload: str) -> bytes:
    data = payload.encode("utf-8")
    n = len(data)
    if n < 126:
        header = struct.pack("!BB", 0x81, n)
    elif n < (1 << 16):
        header = struct.pack("!BBH", 0x81, 126, n)
    else:
        header = struct.pack("!BBQ", 0x81, 127, n)
    return header + data


def _ws_read_exact(rfile, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = rfile.read(n - len(buf))
        if not chunk:
            raise ConnectionError("websocket peer closed")
        buf += chunk
    return buf


def ws_read_frame(rfile) -> tuple[int, bytes]:
    """Read one frame, returning (opcode, payload). Client frames must be
    masked per RFC 6455."""
    b0, b1 = struct.unpack("!BB", _ws_read_exact(rfile, 2))
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    length = b1 & 0x7F
    if length == 126:
        (length,) = struct.unpack("!H", _ws_read_exact(rfile, 2))
    elif length == 127:
        (length,) = struct.unpack("!Q", _ws_read_exact(rfile, 8))
    mask = _ws_read_exact(rfile, 4) if masked else b""
    payload = _ws_read_exact(rfile, length) if length else b""
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


class _WsHandler(socketserver.StreamRequestHandler):
    def handle(self):
        if not self._handshake():
            return
        session = Session(self.server.state)
        buffer = b""
        try:
            while True:
                opcode, payload = ws_read_frame(self.rfile)
                if opcode == 0x8:  # close
                    self.wfile.write(struct.pack("!BB", 0x88, 0))
                    break
                if opcode == 0x9:  # ping -> pong
                    self.wfile.write(struct.pack("!BB", 0x8A, len(payload)) + payload)
                    continue
                if opcode in (0x1, 0x0):
                    buffer += payload
                    # FIN handling is implicit: messages are single text
                    # frames from the bundled client
                    reply = session.handle_line(buffer.decode("utf-8",
                                                              errors="replace"))
                    buffer = b""
                    self.wfile.write(ws_encode_text(reply))
                    self.wfile.flush()
        except (ConnectionError, BrokenPipeError, ConnectionResetError):
            pass

    def _handshake(self) -> bool:
        request = self.rfile.readline().decode("latin-1")
        headers = {}
        while True:
            line = self.rfile.readline().decode("latin-1").strip()
            if not line:
                break
            if ":" in line:
                name, value = line.split(":", 1)
                headers[name.strip().lower()] = value.strip()
        key = headers.get("sec-websocket-key")
        if not request.startswith("GET") or key is None:
            self.wfile.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        self.wfile.write(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\n"
            b"Connection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + _ws_accept_key(key).encode("ascii")
            + b"\r\n\r\n")
        self.wfile.flush()
        return True


class WebSocketWireServer(socketserver.ThreadingTCPServer):
    """WebSocket endpoint for the same line protocol (one JSON message per
    text frame); used by the browser teleop client."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, state: ServiceState, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _WsHandler)
        self.state = state

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class WireClient:
    """Minimal blocking client for tests and scripted rollouts."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rwb")
        self.seq = 0

    def request(self, kind: str, payload: dict | None = None) -> dict:
        self.seq += 1
        msg = {"kind": kind, "seq": self.seq, "payload": payload or {}}
        self.file.write(json.dumps(msg).encode("utf-8") + b"\n")
        self.file.flush()
        raw = self.file.readline()
        if not raw:
            raise ConnectionError("server closed the connection")
        return json.loads(raw.decode("utf-8"))

    def send_raw(self, line: str) -> dict:
        self.file.write(line.encode("utf-8") + b"\n")
        self.file.flush()
        raw = self.file.readline()
        if not raw:
            raise ConnectionError("server closed the connection")
        return json.loads(raw.decode("utf-8"))

    def close(self):
        try:
            self.file.close()
        finally:
            self.sock.close()
