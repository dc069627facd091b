"""In-process mock of the chat-completion wire shape, for tests and demos.

Speaks the same JSON request/response format as the real annotation client:
POST body {"model", "messages", ...} in, {"choices": [{"message":
{"content": ...}}]} out. Supports scripted failures and token checks so
retry/backoff and auth handling can be exercised without a network.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockChatServer:
    """Scripted chat-completion endpoint on a local ephemeral port.

    responder: callable mapping the user prompt string to the reply text.
    failures: list of HTTP status codes, consumed one per request before any
    successful response is served.
    require_token: when set, requests without `Authorization: Bearer <token>`
    get a 401.
    """

    def __init__(self, responder=None, failures=None, require_token=None):
        self.responder = responder or (lambda prompt: "Not humanitarian")
        self.failures = list(failures or [])
        self.require_token = require_token
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def start(self) -> "MockChatServer":
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with outer._lock:
                    outer.requests.append(payload)
                    fail_with = outer.failures.pop(0) if outer.failures else None
                if outer.require_token is not None:
                    auth = self.headers.get("Authorization", "")
                    if auth != f"Bearer {outer.require_token}":
                        self._reply(401, {"error": "unauthorized"})
                        return
                if fail_with is not None:
                    self._reply(fail_with, {"error": f"injected {fail_with}"})
                    return
                prompt = payload.get("messages", [{}])[-1].get("content", "")
                self._reply(200, {
                    "choices": [{"message": {"role": "assistant",
                                             "content": outer.responder(prompt)}}],
                })

            def _reply(self, status: int, body: dict):
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._thread.join(timeout=5)
            self._server = None

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()
