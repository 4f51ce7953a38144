"""Operator-facing HTTP API over the orchestrator.

Endpoints:
  POST /missions          {"text": "..."}        -> 202 {"mission_id": ...}
  GET  /missions/<id>                            -> full mission record
  GET  /state                                    -> telemetry snapshot + queue
  GET  /rules                                    -> the policy rule set
  GET  /events                                   -> newline-delimited JSON event stream

Responses carry permissive CORS headers so a browser console served from
another origin can talk to a local orchestrator directly.
"""

from __future__ import annotations

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional


class OperatorAPI:
    def __init__(self, orchestrator, host: str = "127.0.0.1", port: int = 0):
        self.orchestrator = orchestrator
        handler = _make_handler(orchestrator)
        self._server = ThreadingHTTPServer((host, port), handler)
        self._server.daemon_threads = True
        self._server.block_on_close = False
        self._server.stopping = threading.Event()  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="fieldops-api", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.stopping.set()  # type: ignore[attr-defined]
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


def _make_handler(orch):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- helpers ------------------------------------------------------
        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self._cors()
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _not_found(self, what: str) -> None:
            self._json(404, {"error": f"{what} not found"})

        # -- verbs --------------------------------------------------------
        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_POST(self):
            if self.path.rstrip("/") != "/missions":
                self._not_found("endpoint")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                text = payload["text"]
                if not isinstance(text, str):
                    raise TypeError("text must be a string")
                mission_id = orch.submit_mission(text)
            except (ValueError, KeyError, TypeError) as exc:
                self._json(400, {"error": f"bad request: {exc}"})
                return
            self._json(202, {"mission_id": mission_id})

        def do_GET(self):
            path = self.path.split("?", 1)[0].rstrip("/") or "/"
            if path == "/state":
                self._json(200, orch.state_dict())
            elif path == "/rules":
                self._json(200, json.loads(orch.rules.to_json()))
            elif path == "/events":
                self._stream_events()
            elif path.startswith("/missions/"):
                record = orch.get_record(path.removeprefix("/missions/"))
                if record is None:
                    self._not_found("mission")
                else:
                    self._json(200, record.to_dict())
            elif path == "/missions":
                self._json(400, {"error": "mission id required: GET /missions/<id>"})
            else:
                self._not_found("endpoint")

        def _stream_events(self):
            sub = orch.subscribe()
            try:
                self.send_response(200)
                self._cors()
                self.send_header("Content-Type", "application/x-ndjson")
                self.send_header("Cache-Control", "no-store")
                # no Content-Length: stream until either side closes
                self.send_header("Connection", "close")
                self.end_headers()
                # opening frame lets a client resync without a second request
                self._write_event({"kind": "state", **orch.state_dict()})
                while not self.server.stopping.is_set():
                    try:
                        event = sub.get(timeout=0.5)
                    except queue.Empty:
                        continue
                    self._write_event(event)
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                orch.unsubscribe(sub)

        def _write_event(self, event: dict) -> None:
            self.wfile.write((json.dumps(event, separators=(",", ":")) + "\n").encode("utf-8"))
            self.wfile.flush()

    return Handler
