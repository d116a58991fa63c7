import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from navbench.episodes import InstructionBundle, RefinementClients, refine
from navbench.instructions import HttpRefinementClient, RefinementError, coarse_templates


class _Endpoint(BaseHTTPRequestHandler):
    requests = []
    behavior = "ok"

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _Endpoint.requests.append({
            "path": self.path,
            "auth": self.headers.get("Authorization"),
            "body": body,
        })
        if _Endpoint.behavior == "http_error":
            self.send_response(500)
            self.end_headers()
            return
        if _Endpoint.behavior == "bad_schema":
            payload = {"caption": "wrong key"}
        else:
            payload = {"text": f"echo:{body['role']}"}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def endpoint(monkeypatch):
    server = HTTPServer(("127.0.0.1", 0), _Endpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}/refine"
    monkeypatch.setenv("REFINEMENT_ENDPOINT", url)
    monkeypatch.setenv("REFINEMENT_TOKEN", "sekrit")
    _Endpoint.requests = []
    _Endpoint.behavior = "ok"
    yield url
    server.shutdown()


def test_http_client_posts_role_prompt_context_with_bearer(endpoint):
    client = HttpRefinementClient("describer", timeout=5)
    text = client.request("describe the cup", {"target_label": "cup"})
    assert text == "echo:describer"
    req = _Endpoint.requests[-1]
    assert req["auth"] == "Bearer sekrit"
    assert req["body"] == {"role": "describer", "prompt": "describe the cup",
                           "context": {"target_label": "cup"}}


def test_http_client_rejects_bad_schema(endpoint):
    _Endpoint.behavior = "bad_schema"
    client = HttpRefinementClient("verifier", timeout=5)
    with pytest.raises(RefinementError):
        client.request("check", {})


def test_http_client_http_error(endpoint):
    _Endpoint.behavior = "http_error"
    client = HttpRefinementClient("synthesizer", timeout=5)
    with pytest.raises(RefinementError):
        client.request("rewrite", {})


def test_missing_endpoint_configuration(monkeypatch):
    monkeypatch.delenv("REFINEMENT_ENDPOINT", raising=False)
    with pytest.raises(RefinementError):
        HttpRefinementClient("describer")


def test_refine_with_http_failures_keeps_template(endpoint):
    _Endpoint.behavior = "http_error"
    bundle = InstructionBundle(coarse=coarse_templates("cup", "on the table", "kitchen"))
    clients = RefinementClients(
        describer=HttpRefinementClient("describer", timeout=5),
        synthesizer=HttpRefinementClient("synthesizer", timeout=5),
    )
    out = refine(bundle, {"target_label": "cup", "reference_label": "table",
                          "room_label": "kitchen", "prior_relation": "on"}, clients)
    assert out.coarse == bundle.coarse
