"""Control API: loopback JSON over HTTP, no auth in v1.

Every mutation goes through the state machine; the handlers only translate
HTTP verbs into events and engine errors into status codes (404 unknown,
409 illegal transition, 422 PII reintroduced by an edit).
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote

from ..engagement import IllegalTransition
from .service import Service, UnknownDraft, UnknownThread

logger = logging.getLogger(__name__)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
}


def make_handler(service: Service):
    class ControlApiHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # route through logging, not stderr
            logger.debug("api: " + fmt, *args)

        # -- plumbing ------------------------------------------------------

        def _send(self, status: int, body: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json(self, status: int, payload) -> None:
            self._send(status, json.dumps(payload).encode("utf-8"), "application/json")

        def _csv(self, text: str) -> None:
            self._send(200, text.encode("utf-8"), "text/csv; charset=utf-8")

        def _error(self, status: int, message: str, extra: dict | None = None) -> None:
            payload = {"error": message}
            if extra:
                payload.update(extra)
            self._json(status, payload)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length", "0") or "0")
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            try:
                data = json.loads(raw)
            except json.JSONDecodeError:
                raise ValueError("request body is not valid JSON")
            if not isinstance(data, dict):
                raise ValueError("request body must be a JSON object")
            return data

        def _static(self, path: str) -> None:
            root = service.config.frontend_dir
            if root is None:
                self._error(404, "no frontend bundled")
                return
            rel = "index.html" if path in ("/", "") else path.lstrip("/")
            target = (Path(root) / rel).resolve()
            if not str(target).startswith(str(Path(root).resolve())) or not target.is_file():
                self._error(404, "not found")
                return
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), ctype)

        # -- routes ---------------------------------------------------------

        def do_GET(self) -> None:
            try:
                path = self.path.split("?", 1)[0]
                if path == "/threads":
                    self._json(200, {"threads": service.thread_summaries()})
                elif m := re.fullmatch(r"/threads/([^/]+)/events", path):
                    self._json(200, {"events": service.thread_events(unquote(m.group(1)))})
                elif m := re.fullmatch(r"/threads/([^/]+)", path):
                    self._json(200, service.thread_detail(unquote(m.group(1))))
                elif path == "/queue":
                    self._json(200, {"drafts": service.queue_items()})
                elif path == "/report":
                    self._csv(service.report_csv())
                elif path == "/timeline":
                    self._csv(service.timeline_csv())
                else:
                    self._static(path)
            except UnknownThread as exc:
                self._error(404, f"unknown thread {exc.args[0]}")
            except Exception as exc:  # never let a handler kill the server
                logger.exception("GET %s failed", self.path)
                self._error(500, str(exc))

        def do_POST(self) -> None:
            try:
                path = self.path.split("?", 1)[0]
                if m := re.fullmatch(r"/drafts/([^/]+)/approve", path):
                    self._json(200, {"state": service.approve_draft(unquote(m.group(1)))})
                elif m := re.fullmatch(r"/drafts/([^/]+)/edit", path):
                    body = self._read_json().get("body")
                    if not isinstance(body, str) or not body:
                        self._error(400, "edit requires a non-empty body string")
                        return
                    result = service.edit_draft(unquote(m.group(1)), body)
                    if result.get("rejected"):
                        self._error(422, "edit reintroduces PII", {"findings": result["findings"]})
                    else:
                        self._json(200, result)
                elif m := re.fullmatch(r"/drafts/([^/]+)/reject", path):
                    self._json(200, {"state": service.reject_draft(unquote(m.group(1)))})
                elif m := re.fullmatch(r"/threads/([^/]+)/stop", path):
                    self._json(200, {"state": service.stop_thread(unquote(m.group(1)))})
                else:
                    self._error(404, "not found")
            except UnknownThread as exc:
                self._error(404, f"unknown thread {exc.args[0]}")
            except UnknownDraft as exc:
                self._error(404, f"unknown draft {exc.args[0]}")
            except IllegalTransition as exc:
                self._error(409, str(exc))
            except ValueError as exc:
                self._error(400, str(exc))
            except Exception as exc:
                logger.exception("POST %s failed", self.path)
                self._error(500, str(exc))

    return ControlApiHandler


class ApiServer:
    """Threaded HTTP server bound to loopback by default."""

    def __init__(self, service: Service, host: str | None = None, port: int | None = None):
        self.service = service
        host = host if host is not None else service.config.api_host
        port = port if port is not None else service.config.api_port
        self.httpd = ThreadingHTTPServer((host, port), make_handler(service))
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True,
                                        name="scambait-api")
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
