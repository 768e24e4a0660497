"""HTTP face of the processing core.

Endpoints, all JSON:

- GET  /patients             roster with each patient's latest prediction
- GET  /patients/{id}/twin   current twin state and traces
- GET  /predictions/stream   server-sent events, one prediction per event
- POST /feedback             clinician outcome or override

Built on the stdlib threading HTTP server; one process, no framework.
The stream endpoint first replays the latest event per patient so a
client joining late (or reconnecting) starts from current state, then
tails the broadcaster. Consumers dedupe on (patient_id, t_ms).
"""

from __future__ import annotations

import json
import logging
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import CardioTwinError, ConfigError, UnknownReferenceError, ValidationError
from .fusion import encode_event

log = logging.getLogger("cardiotwin.server")

STREAM_QUEUE_SIZE = 256
HEARTBEAT_S = 15.0


class Broadcaster:
    """Fan-out of encoded prediction events to any number of SSE clients.

    Slow clients drop events rather than block the pipeline; the stream's
    initial snapshot covers them on reconnect.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._clients: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=STREAM_QUEUE_SIZE)
        with self._lock:
            self._clients.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            try:
                self._clients.remove(q)
            except ValueError:
                pass

    def publish(self, line: str) -> None:
        with self._lock:
            clients = list(self._clients)
        for q in clients:
            try:
                q.put_nowait(line)
            except queue.Full:
                log.debug("dropping event for slow stream client")

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)


def parse_address(addr: str) -> tuple[str, int]:
    """Split "host:port"; empty host means loopback, port 0 means auto."""
    if ":" not in addr:
        raise ConfigError(f"serve address must look like host:port, got {addr!r}")
    host, _, port_s = addr.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_s)
    except ValueError:
        raise ConfigError(f"bad port in serve address {addr!r}") from None
    if not 0 <= port <= 65535:
        raise ConfigError(f"port out of range in serve address {addr!r}")
    return host, port


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "cardiotwin"

    # Set by ConsoleServer when the handler class is bound.
    state = None
    broadcaster = None
    static_dir = None

    # -- plumbing ----------------------------------------------------------

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_json(self, status: int, doc) -> None:
        body = json.dumps(doc, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, exc: Exception) -> None:
        self._send_json(status, {"error": str(exc), "type": type(exc).__name__})

    # -- methods -----------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        try:
            if path == "/patients":
                self._send_json(200, self.state.patients_snapshot())
            elif path.startswith("/patients/") and path.endswith("/twin"):
                patient_id = path[len("/patients/"):-len("/twin")]
                try:
                    self._send_json(200, self.state.twin_snapshot(patient_id))
                except UnknownReferenceError as exc:
                    self._send_error_json(404, exc)
            elif path == "/predictions/stream":
                self._stream()
            elif self.static_dir is not None:
                self._static(path)
            else:
                self._send_json(404, {"error": f"no such endpoint {path!r}"})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        if path != "/feedback":
            self._send_json(404, {"error": f"no such endpoint {path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            doc = json.loads(raw.decode("utf-8"))
            if not isinstance(doc, dict):
                raise ValidationError("feedback body must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            self._send_error_json(400, exc)
            return
        try:
            ack = self.state.apply_feedback(doc)
        except UnknownReferenceError as exc:
            self._send_error_json(404, exc)
            return
        except ValidationError as exc:
            self._send_error_json(400, exc)
            return
        except CardioTwinError as exc:
            self._send_error_json(422, exc)
            return
        self._send_json(200, ack)

    # -- endpoint bodies ---------------------------------------------------

    def _stream(self):
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()

        def emit(line: str) -> None:
            self.wfile.write(b"data: " + line.encode("utf-8") + b"\n\n")
            self.wfile.flush()

        q = self.broadcaster.subscribe()
        try:
            # Snapshot first so reconnecting clients resynchronize; events
            # repeat (patient_id, t_ms) pairs the client may have seen, and
            # the client is expected to dedupe on that key.
            with self.state.lock:
                snapshot = [encode_event(ev) for ev in self.state.last_event.values()]
            for line in snapshot:
                emit(line)
            while True:
                try:
                    line = q.get(timeout=HEARTBEAT_S)
                except queue.Empty:
                    self.wfile.write(b": keep-alive\n\n")
                    self.wfile.flush()
                    continue
                emit(line)
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.broadcaster.unsubscribe(q)

    def _static(self, path: str):
        root = Path(self.static_dir).resolve()
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            self._send_json(404, {"error": "not found"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json(404, {"error": f"no such file {rel!r}"})
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ConsoleServer:
    """Owns the listening socket and its serving thread."""

    def __init__(self, addr: str, state, broadcaster: Broadcaster, static_dir=None):
        host, port = parse_address(addr)
        handler = type("BoundHandler", (_Handler,), {
            "state": state,
            "broadcaster": broadcaster,
            "static_dir": static_dir,
        })
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"{host}:{port}"

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="console-http", daemon=True)
        self._thread.start()
        log.info("console endpoints on http://%s", self.address)

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
