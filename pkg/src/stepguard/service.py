"""Loopback HTTP face of the verifier.

One fixed route decides requests:

    POST /v1/verify   {"action_id": ..., "method": ..., "url": ...}
      -> {"allow": bool, "reason": str, "scope": str|null, "level": str|null,
          "granted": str|null}

The four leading response fields are the stable contract; ``granted`` (the
policy's level for the inferred scope, when one applies) rides along so an
enforcement point can say what the caller actually held.  ``GET /v1/health``
answers liveness probes.  Malformed payloads get a 400 with an error body and
the connection stays usable.

Every decision, in both modes, is appended to a JSONL audit log when a path
is configured.  In learning mode a graceful shutdown derives policies from
everything observed and writes them into the knowledge directory.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .endpoints import EndpointMap, RequestDescriptor
from .policy import KnowledgeBase, save_policy
from .verifier import Decision, Mode, ObservationLog, derive_policies, verify

log = logging.getLogger(__name__)


class VerifierService:
    """Threaded verification service bound to a loopback address."""

    def __init__(
        self,
        kb: KnowledgeBase,
        endpoint_map: EndpointMap,
        mode: Mode,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        allow_unknown: bool = False,
        knowledge_dir: str | Path | None = None,
        audit_path: str | Path | None = None,
    ) -> None:
        self.kb = kb
        self.endpoint_map = endpoint_map
        self.mode = mode
        self.allow_unknown = allow_unknown
        self.knowledge_dir = Path(knowledge_dir) if knowledge_dir else None
        self.observations = ObservationLog()
        self.request_count = 0
        self._count_lock = threading.Lock()
        self._audit_lock = threading.Lock()
        self._audit_path = Path(audit_path) if audit_path else None
        self._thread: threading.Thread | None = None

        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            timeout = 5  # idle keep-alive connections fold up on their own
            disable_nagle_algorithm = True

            def log_message(self, fmt: str, *args: object) -> None:
                log.debug("verifier: " + fmt, *args)

            def _reply(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self) -> None:
                if self.path == "/v1/health":
                    self._reply(200, {"status": "ok", "mode": service.mode.value})
                else:
                    self._reply(404, {"error": "not found"})

            def do_POST(self) -> None:
                if self.path != "/v1/verify":
                    self._reply(404, {"error": "not found"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    raw = self.rfile.read(length)
                    payload = json.loads(raw.decode("utf-8"))
                except (ValueError, UnicodeDecodeError) as exc:
                    self._reply(400, {"error": f"malformed request body: {exc}"})
                    return
                if not isinstance(payload, dict):
                    self._reply(400, {"error": "request body must be an object"})
                    return
                missing = {"action_id", "method", "url"} - payload.keys()
                if missing:
                    self._reply(400, {"error": f"missing fields: {sorted(missing)}"})
                    return
                try:
                    descriptor = RequestDescriptor.from_url(
                        str(payload["method"]), str(payload["url"]), str(payload["action_id"])
                    )
                except ValueError as exc:
                    self._reply(400, {"error": str(exc)})
                    return
                decision = service._decide(descriptor)
                self._reply(200, {
                    "allow": decision.allow,
                    "reason": decision.reason,
                    "scope": decision.inferred.scope.value if decision.inferred.scope else None,
                    "level": str(decision.inferred.level) if decision.inferred.level else None,
                    "granted": str(decision.granted_level) if decision.granted_level is not None else None,
                })

        # Handler threads are daemons so idle keep-alive connections cannot
        # wedge shutdown; an explicit in-flight count gives stop() its drain.
        self._server = ThreadingHTTPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._inflight = 0

    def _decide(self, descriptor: RequestDescriptor) -> Decision:
        with self._count_lock:
            self.request_count += 1
            self._inflight += 1
        try:
            decision = verify(
                descriptor, self.kb, self.endpoint_map, self.mode,
                allow_unknown=self.allow_unknown,
            )
            if self.mode is Mode.LEARNING:
                self.observations.record(decision)
            self._audit(decision)
            return decision
        finally:
            with self._count_lock:
                self._inflight -= 1

    def _audit(self, decision: Decision) -> None:
        if self._audit_path is None:
            return
        line = json.dumps(decision.to_audit_record(self.mode))
        with self._audit_lock:
            with self._audit_path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "VerifierService":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="verifier", daemon=True
        )
        self._thread.start()
        return self

    def stop(self, drain_seconds: float = 5.0) -> None:
        """Stop serving, drain in-flight requests, flush learned policies."""
        import time

        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=10)
        self._server.server_close()
        deadline = time.monotonic() + drain_seconds
        while time.monotonic() < deadline:
            with self._count_lock:
                if self._inflight == 0:
                    break
            time.sleep(0.01)
        if self.mode is Mode.LEARNING and self.knowledge_dir is not None:
            for policy in derive_policies(self.observations):
                save_policy(self.knowledge_dir, policy)

    def __enter__(self) -> "VerifierService":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()
