from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


def deterministic_vector(text: str, dim: int = 8) -> list[float]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [b / 255.0 + 0.01 for b in digest[:dim]]


class _StubEmbedHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (http.server API)
        if self.path != "/embed":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length))
        texts = body.get("texts", [])
        with self.server.lock:
            self.server.calls += 1
            self.server.texts_seen.extend(texts)
        mode = self.server.mode
        if mode == "http-error":
            self.send_error(500)
            return
        if mode == "not-json":
            payload = b"definitely not json"
        elif mode == "wrong-count":
            payload = json.dumps({"vectors": [[1.0, 2.0]] * (len(texts) + 1)}).encode()
        elif mode == "ragged":
            vectors = [
                deterministic_vector(t)[: (3 if i % 2 else 8)] for i, t in enumerate(texts)
            ]
            payload = json.dumps({"vectors": vectors}).encode()
        else:
            vectors = [deterministic_vector(t) for t in texts]
            payload = json.dumps({"vectors": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class StubEmbedServer:
    def __init__(self):
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _StubEmbedHandler)
        self._server.mode = "ok"
        self._server.calls = 0
        self._server.texts_seen = []
        self._server.lock = threading.Lock()
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    @property
    def calls(self) -> int:
        return self._server.calls

    @property
    def texts_seen(self) -> list[str]:
        return self._server.texts_seen

    def set_mode(self, mode: str) -> None:
        self._server.mode = mode

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def embed_server():
    server = StubEmbedServer()
    yield server
    server.close()
