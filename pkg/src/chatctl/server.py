"""HTTP chat API on the standard library's threading HTTP server.

Endpoints:
    POST /webhooks/chat                  {"sender", "message"} -> [{"recipient_id", "text"}]
    GET  /health                         -> {"status", "model_fingerprint"}
    GET  /model/parse?q=<text>           -> {"intent_ranking", "entities"}
    POST /conversations/<sender>/restart -> {"status"}
    GET  /conversations/<sender>/tracker -> debug view (slots, last turn)

Distinct senders are handled concurrently; each sender's tracker is guarded
by a per-sender lock so its messages are processed strictly in order. CORS
headers are set on every response so a browser client on another origin can
talk to the API. An optional static directory can be mounted at / for the
chat UI.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse

from .engine import DialogueEngine, request_seed


class ChatService:
    """Engine plus per-sender conversation state."""

    def __init__(self, engine: DialogueEngine, global_seed: int = 0):
        self.engine = engine
        self.global_seed = global_seed
        self._trackers: dict[str, object] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._debug: dict[str, dict] = {}
        self._registry_lock = threading.Lock()

    def _sender_lock(self, sender: str) -> threading.Lock:
        with self._registry_lock:
            if sender not in self._locks:
                self._locks[sender] = threading.Lock()
            return self._locks[sender]

    def _tracker(self, sender: str):
        if sender not in self._trackers:
            self._trackers[sender] = self.engine.new_tracker(sender)
        return self._trackers[sender]

    def chat(self, sender: str, message: str) -> list[dict]:
        with self._sender_lock(sender):
            tracker = self._tracker(sender)
            seed = request_seed(self.global_seed, sender, tracker.message_count)
            responses = self.engine.handle_message(tracker, message, seed)
            if responses:
                self._debug[sender] = responses[0].debug
            return [{"recipient_id": sender, "text": r.text} for r in responses]

    def parse(self, text: str) -> dict:
        prediction, entities = self.engine.parse(text)
        return {
            "intent_ranking": [
                {"name": name, "confidence": confidence}
                for name, confidence in prediction.ranking
            ],
            "entities": [
                {
                    "entity": e["entity"],
                    "raw_value": e["raw_value"],
                    "value": e["value"],
                    "start": e["start"],
                    "end": e["end"],
                }
                for e in entities
            ],
        }

    def restart(self, sender: str) -> dict:
        with self._sender_lock(sender):
            tracker = self._tracker(sender)
            self.engine.restart(tracker)
            self._debug.pop(sender, None)
            return {"status": "restarted"}

    def tracker_view(self, sender: str) -> dict:
        with self._sender_lock(sender):
            tracker = self._tracker(sender)
            debug = self._debug.get(sender) or {}
            return {
                "sender_id": sender,
                "slots": dict(tracker.slots),
                "last_action": tracker.last_action,
                "last_intent_ranking": debug.get("intent_ranking", []),
                "last_entities": debug.get("entities", []),
                "last_action_chain": debug.get("action_chain", []),
            }


class _Handler(BaseHTTPRequestHandler):
    service: ChatService
    static_dir: str | None = None
    cors_origin: str = "*"
    protocol_version = "HTTP/1.1"

    # silence per-request stderr logging
    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload, content_type="application/json; charset=utf-8"):
        body = (
            json.dumps(payload, ensure_ascii=False).encode("utf-8")
            if not isinstance(payload, bytes)
            else payload
        )
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", self.cors_origin)
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str):
        self._send(status, {"error": message})

    def _read_json(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", self.cors_origin)
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/health":
            self._send(
                200,
                {
                    "status": "ok",
                    "model_fingerprint": self.service.engine.domain.fingerprint(),
                },
            )
            return
        if url.path == "/model/parse":
            query = parse_qs(url.query).get("q", [""])[0]
            if not query:
                self._error(400, "missing query parameter q")
                return
            self._send(200, self.service.parse(query))
            return
        parts = [p for p in url.path.split("/") if p]
        if len(parts) == 3 and parts[0] == "conversations" and parts[2] == "tracker":
            self._send(200, self.service.tracker_view(unquote(parts[1])))
            return
        if self.static_dir:
            self._serve_static(url.path)
            return
        self._error(404, f"unknown endpoint {url.path}")

    def do_POST(self):
        url = urlparse(self.path)
        if url.path == "/webhooks/chat":
            payload = self._read_json()
            if (
                not isinstance(payload, dict)
                or not isinstance(payload.get("sender"), str)
                or not isinstance(payload.get("message"), str)
                or not payload["sender"]
            ):
                self._error(400, "body must be {\"sender\": string, \"message\": string}")
                return
            self._send(200, self.service.chat(payload["sender"], payload["message"]))
            return
        parts = [p for p in url.path.split("/") if p]
        if len(parts) == 3 and parts[0] == "conversations" and parts[2] == "restart":
            self._send(200, self.service.restart(unquote(parts[1])))
            return
        self._error(404, f"unknown endpoint {url.path}")

    def _serve_static(self, path: str):
        rel = path.lstrip("/") or "index.html"
        base = os.path.abspath(self.static_dir)
        full = os.path.abspath(os.path.join(base, rel))
        if not full.startswith(base + os.sep) and full != base:
            self._error(404, "not found")
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._error(404, "not found")
            return
        content_type = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as handle:
            self._send(200, handle.read(), content_type=content_type)


class ChatServer:
    """Owns the listening socket; start() is non-blocking, stop() is graceful."""

    def __init__(
        self,
        engine: DialogueEngine,
        host: str = "127.0.0.1",
        port: int = 5005,
        global_seed: int = 0,
        static_dir: str | None = None,
        cors_origin: str = "*",
    ):
        service = ChatService(engine, global_seed=global_seed)
        handler = type(
            "BoundHandler",
            (_Handler,),
            {"service": service, "static_dir": static_dir, "cors_origin": cors_origin},
        )
        self.service = service
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)
