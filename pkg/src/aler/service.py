"""HTTP JSON API for the human labeling console.

Endpoints:
    GET  /api/tasks?limit=n  pending tasks with both records' attributes
    POST /api/labels         {"task_id": int, "label": 0|1}
    GET  /api/status         run progress and budget counters
plus a static-file route serving the console assets. Runs on a thread pool
server so handlers may block independently of the training loop.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .oracle import BudgetExhaustedError, LabelQueue, TaskQueueError


@dataclass
class RunStatus:
    """Thread-safe progress snapshot the training loop publishes."""

    chunk: int = 0
    iteration: int = 0
    f1_history: list[float] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def update(self, chunk: int, iteration: int, f1_history: list[float]):
        with self._lock:
            self.chunk = chunk
            self.iteration = iteration
            self.f1_history = list(f1_history)

    def snapshot(self) -> dict:
        with self._lock:
            return {"chunk": self.chunk, "iteration": self.iteration,
                    "f1_history": list(self.f1_history)}


class LabelingService:
    def __init__(self, queue: LabelQueue, status: RunStatus,
                 static_dir: str | Path | None = None,
                 token: str | None = None):
        self.queue = queue
        self.status = status
        self.static_dir = Path(static_dir) if static_dir else None
        self.token = token
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self, host: str = "127.0.0.1", port: int = 0) -> int:
        """Start serving on a background thread; returns the bound port."""
        handler = _make_handler(self)
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self._server.server_address[1]

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None


def _task_payload(task) -> dict:
    return {
        "task_id": task.task_id,
        "pair": {"r_id": task.pair[0], "s_id": task.pair[1]},
        "r_attributes": [[n, v] for n, v in task.r_attributes],
        "s_attributes": [[n, v] for n, v in task.s_attributes],
        "provenance": task.provenance,
        "status": task.status,
    }


def _make_handler(service: LabelingService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, code: int, payload: dict):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _authorized(self) -> bool:
            if service.token is None:
                return True
            return self.headers.get("X-Auth-Token") == service.token

        def do_GET(self):
            if not self._authorized():
                self._send_json(401, {"error": "missing or invalid token"})
                return
            url = urlparse(self.path)
            if url.path == "/api/tasks":
                params = parse_qs(url.query)
                limit = None
                if "limit" in params:
                    try:
                        limit = int(params["limit"][0])
                    except ValueError:
                        self._send_json(400, {"error": "limit must be an integer"})
                        return
                tasks = service.queue.pending(limit)
                self._send_json(200, {"tasks": [_task_payload(t) for t in tasks]})
            elif url.path == "/api/status":
                snap = service.status.snapshot()
                budget = service.queue.budget
                snap["budget"] = {"consumed": budget.consumed, "remaining": budget.remaining,
                                  "hard_cap": budget.hard_cap}
                self._send_json(200, snap)
            else:
                self._serve_static(url.path)

        def do_POST(self):
            if not self._authorized():
                self._send_json(401, {"error": "missing or invalid token"})
                return
            url = urlparse(self.path)
            if url.path != "/api/labels":
                self._send_json(404, {"error": f"unknown endpoint {url.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                task_id = payload["task_id"]
                label = payload["label"]
            except (ValueError, KeyError, json.JSONDecodeError):
                self._send_json(400, {"error": "body must be {\"task_id\": int, \"label\": 0|1}"})
                return
            try:
                result = service.queue.submit_label(int(task_id), int(label))
            except BudgetExhaustedError as exc:
                self._send_json(403, {"error": str(exc)})
                return
            except TaskQueueError as exc:
                message = str(exc)
                code = 404 if "unknown task" in message else 409
                self._send_json(code, {"error": message})
                return
            self._send_json(200, result)

        def _serve_static(self, path: str):
            if service.static_dir is None:
                self._send_json(404, {"error": "no static assets configured"})
                return
            rel = path.lstrip("/") or "index.html"
            target = (service.static_dir / rel).resolve()
            root = service.static_dir.resolve()
            if not str(target).startswith(str(root)) or not target.is_file():
                self._send_json(404, {"error": f"not found: {path}"})
                return
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler
