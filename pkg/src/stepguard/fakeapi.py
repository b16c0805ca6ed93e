"""Deterministic stand-in API server for tests and demos.

Answers every request with a fixed-shape JSON echo of the method and path and
records each hit (method, path, headers, body) for later assertions.  The
response deliberately carries no Date or Server header, so two responses to
the same request are byte-identical and relay fidelity can be checked by
comparison.  Optionally serves TLS with a caller-supplied context.
"""

from __future__ import annotations

import json
import ssl
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass
class RecordedRequest:
    method: str
    path: str
    headers: dict[str, str]
    body: bytes


@dataclass
class _HitLog:
    lock: threading.Lock = field(default_factory=threading.Lock)
    requests: list[RecordedRequest] = field(default_factory=list)
    connections: int = 0


class FakeApiServer:
    """Threaded echo server with a hit log."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        tls_context: ssl.SSLContext | None = None,
    ) -> None:
        log_ref = self._log = _HitLog()

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            timeout = 10
            disable_nagle_algorithm = True

            def log_message(self, fmt: str, *args: object) -> None:
                pass

            def _serve(self) -> None:
                length = int(self.headers.get("Content-Length", "0") or 0)
                body = self.rfile.read(length) if length else b""
                with log_ref.lock:
                    log_ref.requests.append(RecordedRequest(
                        method=self.command,
                        path=self.path,
                        headers={k.lower(): v for k, v in self.headers.items()},
                        body=body,
                    ))
                payload = json.dumps(
                    {"ok": True, "method": self.command, "path": self.path},
                    sort_keys=True,
                ).encode("utf-8")
                # send_response_only skips the automatic Date/Server headers
                self.send_response_only(200, "OK")
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.send_header("X-Fake-Api", "1")
                self.end_headers()
                if self.command != "HEAD":
                    self.wfile.write(payload)

            do_GET = do_POST = do_PUT = do_PATCH = do_DELETE = do_HEAD = _serve

        class Server(ThreadingHTTPServer):
            daemon_threads = True

            def get_request(self):  # count raw connections for leak checks
                request, addr = super().get_request()
                with log_ref.lock:
                    log_ref.connections += 1
                return request, addr

        self._server = Server((host, port), Handler)
        if tls_context is not None:
            self._server.socket = tls_context.wrap_socket(
                self._server.socket, server_side=True
            )
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def port(self) -> int:
        return self.address[1]

    def start(self) -> "FakeApiServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="fake-api", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._server.server_close()

    def __enter__(self) -> "FakeApiServer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()

    # --- assertions -------------------------------------------------------

    @property
    def requests(self) -> list[RecordedRequest]:
        with self._log.lock:
            return list(self._log.requests)

    @property
    def connection_count(self) -> int:
        with self._log.lock:
            return self._log.connections

    def hits(self, path_prefix: str = "/") -> int:
        with self._log.lock:
            return sum(1 for r in self._log.requests if r.path.startswith(path_prefix))

    def clear(self) -> None:
        with self._log.lock:
            self._log.requests.clear()
            self._log.connections = 0
