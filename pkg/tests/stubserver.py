"""Local HTTP stub backends for adapter tests: an OpenAI-style streaming
chat endpoint, a submit/poll image endpoint, and a transcription endpoint."""

from __future__ import annotations

import json
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _StubHandler(BaseHTTPRequestHandler):
    server: "StubServer"

    def log_message(self, fmt, *args):  # noqa: D102 - silence
        pass

    def _json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):  # noqa: N802
        length = int(self.headers.get("content-length", 0))
        raw = self.rfile.read(length) if length else b""
        if self.path == "/v1/chat/completions":
            self._chat(raw)
        elif self.path == "/generate":
            self._generate(raw)
        elif self.path == "/transcribe":
            self._transcribe(raw)
        else:
            self._json(404, {"error": "unknown path"})

    def do_GET(self):  # noqa: N802
        if self.path.startswith("/progress/"):
            job_id = self.path.rsplit("/", 1)[1]
            if not self.server.progress_enabled:
                self._json(404, {"error": "no progress api"})
                return
            job = self.server.jobs.get(job_id)
            if job is None:
                self._json(404, {"error": "unknown job"})
                return
            started, steps = job
            done_steps = min(steps, int((time.monotonic() - started) / self.server.step_seconds))
            self._json(
                200,
                {
                    "steps_completed": done_steps,
                    "total_steps": steps,
                    "done": done_steps >= steps,
                },
            )
        else:
            self._json(200, {"ok": True})

    def _chat(self, raw: bytes) -> None:
        body = json.loads(raw or b"{}")
        if not body.get("stream"):
            time.sleep(self.server.token_delay)
            self._json(200, {"choices": [{"message": {"content": "done"}}]})
            return
        self.send_response(200)
        self.send_header("content-type", "text/event-stream")
        self.end_headers()
        for i in range(self.server.tokens):
            time.sleep(self.server.token_delay)
            chunk = {"choices": [{"delta": {"content": f"tok{i} "}}]}
            self.wfile.write(f"data: {json.dumps(chunk)}\n\n".encode())
            self.wfile.flush()
            if self.server.abort_after is not None and i + 1 >= self.server.abort_after:
                self.wfile.flush()
                self.connection.close()
                return
        self.wfile.write(b"data: [DONE]\n\n")
        self.wfile.flush()

    def _generate(self, raw: bytes) -> None:
        body = json.loads(raw or b"{}")
        steps = int(body.get("steps", 4))
        if not self.server.progress_enabled and self.server.sync_generate:
            time.sleep(self.server.step_seconds * steps)
            self._json(200, {"image": "stub"})
            return
        job_id = uuid.uuid4().hex
        self.server.jobs[job_id] = (time.monotonic(), steps)
        self._json(200, {"job_id": job_id})

    def _transcribe(self, raw: bytes) -> None:
        self.server.received.append(time.monotonic())
        time.sleep(self.server.transcribe_delay)
        if self.server.drop_segments and len(self.server.received) in self.server.drop_segments:
            self._json(503, {"error": "overloaded"})
            return
        self._json(200, {"text": "stub caption"})


class StubServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self):
        super().__init__(("127.0.0.1", 0), _StubHandler)
        self.tokens = 3
        self.token_delay = 0.01
        self.abort_after: int | None = None
        self.step_seconds = 0.02
        self.progress_enabled = True
        self.sync_generate = True
        self.transcribe_delay = 0.005
        self.drop_segments: set[int] = set()
        self.jobs: dict[str, tuple[float, int]] = {}
        self.received: list[float] = []

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def start_stub() -> StubServer:
    server = StubServer()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
