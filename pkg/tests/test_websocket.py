import base64
import hashlib
import json
import os
import socket
import struct

import numpy as np
import pytest

from navbench.episodes import SceneContext, make_goal_episode_family, TASK_COARSE
from navbench.generator import GeneratorParams, generate_scene
from navbench.service import ServiceState, WebSocketWireServer
from navbench.simulator import SimConfig


class TinyWsClient:
    """Independent RFC 6455 client: handshake + masked text frames."""

    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port), timeout=30)
        self.rfile = self.sock.makefile("rb")
        key = base64.b64encode(os.urandom(16)).decode()
        self.sock.sendall(
            f"GET / HTTP/1.1\r\nHost: {host}:{port}\r\nUpgrade: websocket\r\n"
            f"Connection: Upgrade\r\nSec-WebSocket-Key: {key}\r\n"
            f"Sec-WebSocket-Version: 13\r\n\r\n".encode())
        status = self.rfile.readline().decode()
        assert "101" in status, status
        headers = {}
        while True:
            line = self.rfile.readline().decode().strip()
            if not line:
                break
            name, value = line.split(":", 1)
            headers[name.strip().lower()] = value.strip()
        expect = base64.b64encode(hashlib.sha1(
            (key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest()).decode()
        assert headers["sec-websocket-accept"] == expect

    def send_text(self, text):
        data = text.encode()
        mask = os.urandom(4)
        n = len(data)
        if n < 126:
            header = struct.pack("!BB", 0x81, 0x80 | n)
        elif n < (1 << 16):
            header = struct.pack("!BBH", 0x81, 0x80 | 126, n)
        else:
            header = struct.pack("!BBQ", 0x81, 0x80 | 127, n)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(data))
        self.sock.sendall(header + mask + masked)

    def recv_text(self):
        b0, b1 = struct.unpack("!BB", self.rfile.read(2))
        length = b1 & 0x7F
        if length == 126:
            (length,) = struct.unpack("!H", self.rfile.read(2))
        elif length == 127:
            (length,) = struct.unpack("!Q", self.rfile.read(8))
        payload = self.rfile.read(length)
        assert b0 & 0x0F in (0x1, 0x8)
        return payload.decode()

    def request(self, kind, seq, payload=None):
        self.send_text(json.dumps({"kind": kind, "seq": seq,
                                   "payload": payload or {}}))
        return json.loads(self.recv_text())

    def close(self):
        self.sock.close()


@pytest.fixture(scope="module")
def ws_world():
    scene = generate_scene(GeneratorParams(), 41)
    ctx = SceneContext(scene)
    ep = make_goal_episode_family(ctx, "wsfam", np.random.default_rng(3))[TASK_COARSE]
    state = ServiceState([scene], [ep], SimConfig(mode="telhop"))
    server = WebSocketWireServer(state, "127.0.0.1", 0)
    server.serve_in_thread()
    yield server, ep
    server.shutdown()


def test_ws_session_flow(ws_world):
    server, ep = ws_world
    client = TinyWsClient(*server.address)
    try:
        hello = client.request("hello", 1)
        assert hello["kind"] == "hello"
        reply = client.request("reset", 2, {"episode_id": ep.episode_id})
        assert reply["kind"] == "observation"
        wp = ep.reference_path.waypoints[-1].tolist()
        client.request("action", 3, {"action": {"type": "hop", "target": wp}})
        done = client.request("action", 4, {"action": {"type": "discrete",
                                                       "primitive": "STOP"}})
        assert done["kind"] == "done"
        assert done["payload"]["result"]["metrics"]["SR"] == 1
    finally:
        client.close()


def test_ws_error_replies(ws_world):
    server, _ = ws_world
    client = TinyWsClient(*server.address)
    try:
        client.send_text("garbage {")
        reply = json.loads(client.recv_text())
        assert reply["kind"] == "error"
        assert reply["payload"]["code"] == "malformed_json"
    finally:
        client.close()


def test_ws_rejects_non_websocket_request(ws_world):
    server, _ = ws_world
    sock = socket.create_connection(server.address, timeout=10)
    sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
    data = sock.recv(100)
    assert b"400" in data
    sock.close()
