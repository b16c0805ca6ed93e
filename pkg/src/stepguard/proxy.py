"""Enforcement proxy that gates API traffic per workflow step.

The proxy sits between a step's processes and the network.  Plain HTTP
requests arrive in absolute-URI form; HTTPS arrives as CONNECT tunnels.
Tunnels to the configured API hosts are intercepted with a locally
issued certificate so the inner requests can be inspected; every
intercepted request is submitted to the verifier service and either
relayed byte-for-byte or answered with a synthesized 403 before any
upstream connection is made.  Traffic to other hosts passes through
untouched and is never submitted to the verifier.
"""

from __future__ import annotations

import json
import socket
import ssl
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from http.client import HTTPConnection, HTTPSConnection

from .errors import ProxyConfigError, VerifierUnavailableError
from .tlsutil import LeafStore
from .verifier import Mode

#: Request headers that describe the client-proxy hop, not the resource.
#: They are dropped before forwarding and before relaying responses.
HOP_BY_HOP = frozenset(
    {
        "connection",
        "keep-alive",
        "proxy-authenticate",
        "proxy-authorization",
        "proxy-connection",
        "te",
        "trailer",
        "transfer-encoding",
        "upgrade",
    }
)

#: Header a runner can set to attribute a request to a step when the
#: proxy serves more than one.  Stripped before forwarding upstream.
ATTRIBUTION_HEADER = "x-stepguard-action-id"

#: Placeholder identity for traffic that carries no attribution at all.
UNATTRIBUTED = "unattributed"

_DENIED_HEADER = "X-Stepguard-Denied"

# Hard ceiling on request bodies buffered for forwarding (64 MiB).
_MAX_BODY = 64 * 1024 * 1024
_MAX_HEAD_LINE = 65536
_MAX_HEADERS = 256


class _BadRequest(Exception):
    """Malformed or oversized request head/body from the client."""


@dataclass(frozen=True)
class FlowRecord:
    """One gated exchange as observed by the proxy."""

    timestamp: float
    action_id: str
    method: str
    host: str
    path: str
    decision: str
    reason: str
    scope: str | None
    required: str | None
    granted: str | None
    status: int
    latency_ms: float
    intercepted: bool
    infrastructure: bool = False

    def to_json(self) -> dict:
        return {
            "ts": self.timestamp,
            "action_id": self.action_id,
            "method": self.method,
            "host": self.host,
            "path": self.path,
            "decision": self.decision,
            "reason": self.reason,
            "scope": self.scope,
            "required": self.required,
            "granted": self.granted,
            "status": self.status,
            "latency_ms": round(self.latency_ms, 3),
            "intercepted": self.intercepted,
            "infrastructure": self.infrastructure,
        }


@dataclass
class ProxyConfig:
    """Static configuration for one proxy instance.

    ``upstream`` overrides where intercepted API requests are sent
    (``http://host:port`` or ``https://host:port``); when ``None`` they
    go to the real API host from the request.  ``action_id`` pins every
    flow to one step; when unset the attribution header is consulted,
    and flows with neither are treated as unattributed.
    """

    verifier_url: str
    api_hosts: frozenset[str] = frozenset({"api.github.com"})
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    mode: Mode = Mode.ENFORCEMENT
    action_id: str | None = None
    upstream: str | None = None
    upstream_ca: str | None = None
    leaf_store: LeafStore | None = None
    flow_log_path: str | None = None
    health_check: bool = True
    verifier_timeout: float = 3.0
    upstream_timeout: float = 15.0

    def __post_init__(self) -> None:
        if not self.api_hosts:
            raise ProxyConfigError("at least one API host must be configured")
        if not self.verifier_url.startswith(("http://", "https://")):
            raise ProxyConfigError(
                f"verifier_url must be http(s), got {self.verifier_url!r}"
            )
        object.__setattr__(
            self, "api_hosts", frozenset(h.lower() for h in self.api_hosts)
        )
        if self.upstream is not None:
            parts = urllib.parse.urlsplit(self.upstream)
            if parts.scheme not in ("http", "https") or not parts.hostname:
                raise ProxyConfigError(f"bad upstream address {self.upstream!r}")

    def intercepts(self, host: str) -> bool:
        return host.lower() in self.api_hosts


class VerifierClient:
    """Thin wire-protocol client with one pooled connection per thread.

    Connection reuse keeps the per-flow gating cost to a single
    round-trip on an established socket, which matters for the latency
    budget of the proxy hot path.
    """

    def __init__(self, url: str, timeout: float = 3.0):
        parts = urllib.parse.urlsplit(url)
        if parts.scheme != "http" or not parts.hostname:
            raise ProxyConfigError(f"verifier url must be plain http, got {url!r}")
        self._host = parts.hostname
        self._port = parts.port or 80
        self._timeout = timeout
        self._local = threading.local()

    def _conn(self) -> HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = HTTPConnection(self._host, self._port, timeout=self._timeout)
            try:
                conn.connect()
                conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            except OSError:
                pass  # request() retries the connect and reports failures
            self._local.conn = conn
        return conn

    def _drop(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            try:
                conn.close()
            except OSError:
                pass
            self._local.conn = None

    def _roundtrip(self, method: str, path: str, body: bytes | None) -> dict:
        headers = {}
        if body is not None:
            headers["Content-Type"] = "application/json"
        # One retry: a pooled connection may have been closed server-side
        # between flows, which surfaces as an error on first use.
        for attempt in (0, 1):
            conn = self._conn()
            try:
                conn.request(method, path, body=body, headers=headers)
                resp = conn.getresponse()
                data = resp.read()
                break
            except (OSError, ssl.SSLError, ConnectionError):
                self._drop()
                if attempt:
                    raise VerifierUnavailableError(
                        f"verifier at {self._host}:{self._port} unreachable"
                    )
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise VerifierUnavailableError("verifier returned unparseable response")
        if resp.status != 200:
            raise VerifierUnavailableError(
                f"verifier answered {resp.status}: {doc.get('error', '')}"
            )
        return doc

    def verify(self, action_id: str, method: str, url: str) -> dict:
        payload = json.dumps(
            {"action_id": action_id, "method": method, "url": url}
        ).encode("utf-8")
        doc = self._roundtrip("POST", "/v1/verify", payload)
        if "allow" not in doc:
            raise VerifierUnavailableError("verifier response missing verdict")
        return doc

    def health(self) -> dict:
        return self._roundtrip("GET", "/v1/health", None)

    def close(self) -> None:
        self._drop()


def _read_line(reader, limit: int = _MAX_HEAD_LINE) -> bytes:
    line = reader.readline(limit + 1)
    if len(line) > limit:
        raise _BadRequest("header line too long")
    return line


def _read_head(reader):
    """Parse one request head; returns None on clean EOF.

    Header order and name casing are preserved as received so the
    forwarded request is as close to the original as the hop allows.
    """
    line = _read_line(reader)
    if not line:
        return None
    request_line = line.rstrip(b"\r\n").decode("latin-1")
    parts = request_line.split(" ")
    if len(parts) != 3:
        raise _BadRequest(f"malformed request line {request_line!r}")
    method, target, version = parts
    if not version.startswith("HTTP/1."):
        raise _BadRequest(f"unsupported protocol {version!r}")
    headers: list[tuple[str, str]] = []
    while True:
        raw = _read_line(reader)
        if raw in (b"\r\n", b"\n"):
            break
        if not raw:
            raise _BadRequest("connection closed mid-headers")
        if len(headers) >= _MAX_HEADERS:
            raise _BadRequest("too many header fields")
        text = raw.rstrip(b"\r\n").decode("latin-1")
        name, sep, value = text.partition(":")
        if not sep or not name or name != name.strip():
            raise _BadRequest(f"malformed header line {text!r}")
        headers.append((name, value.strip()))
    return method.upper(), target, version, headers


def _header(headers: list[tuple[str, str]], name: str) -> str | None:
    name = name.lower()
    for key, value in headers:
        if key.lower() == name:
            return value
    return None


def _read_body(reader, headers: list[tuple[str, str]]) -> bytes:
    """Read a request body framed by Content-Length or chunked coding."""
    encoding = _header(headers, "transfer-encoding")
    if encoding is not None and "chunked" in encoding.lower():
        chunks = []
        total = 0
        while True:
            size_line = _read_line(reader).strip()
            try:
                size = int(size_line.split(b";")[0], 16)
            except ValueError:
                raise _BadRequest(f"bad chunk size {size_line!r}")
            if size == 0:
                # Consume trailer section through the blank line.
                while True:
                    trailer = _read_line(reader)
                    if trailer in (b"\r\n", b"\n", b""):
                        break
                return b"".join(chunks)
            total += size
            if total > _MAX_BODY:
                raise _BadRequest("request body too large")
            data = reader.read(size)
            if len(data) != size:
                raise _BadRequest("connection closed mid-chunk")
            chunks.append(data)
            reader.read(2)  # chunk CRLF
    length_text = _header(headers, "content-length")
    if length_text is None:
        return b""
    try:
        length = int(length_text)
    except ValueError:
        raise _BadRequest(f"bad content-length {length_text!r}")
    if length < 0 or length > _MAX_BODY:
        raise _BadRequest("request body too large")
    body = reader.read(length)
    if len(body) != length:
        raise _BadRequest("connection closed mid-body")
    return body


def _forward_headers(
    headers: list[tuple[str, str]], strip_attribution: bool = True
) -> list[tuple[str, str]]:
    dropped = set(HOP_BY_HOP)
    if strip_attribution:
        dropped.add(ATTRIBUTION_HEADER)
    return [(k, v) for k, v in headers if k.lower() not in dropped]


def _simple_response(
    status: int, reason: str, body: bytes, extra: list[tuple[str, str]] = ()
) -> bytes:
    head = [f"HTTP/1.1 {status} {reason}"]
    head.append("Content-Type: application/json")
    head.append(f"Content-Length: {len(body)}")
    for key, value in extra:
        head.append(f"{key}: {value}")
    return ("\r\n".join(head) + "\r\n\r\n").encode("latin-1") + body


def denial_body(scope: str | None, required: str | None, granted: str | None) -> bytes:
    doc = {
        "message": "Blocked by step-level permission policy",
        "scope": scope,
        "required": required,
        "granted": granted,
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


@dataclass
class _ConnState:
    """Live sockets for one proxied connection, plus whether a request
    is mid-flight (busy) or the connection is parked between requests."""

    socks: list
    busy: bool = False


class ProxyServer:
    """Threaded forward proxy enforcing step policies on API traffic."""

    def __init__(self, config: ProxyConfig):
        self.config = config
        self.verifier = VerifierClient(config.verifier_url, config.verifier_timeout)
        self.flows: list[FlowRecord] = []
        self._flows_lock = threading.Lock()
        self._flow_log = None
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._conn_threads: list[threading.Thread] = []
        self._conns: dict[int, _ConnState] = {}
        self._conns_lock = threading.Lock()
        self._shutdown = threading.Event()
        self.port: int | None = None

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        if self.config.health_check:
            try:
                self.verifier.health()
            except VerifierUnavailableError as exc:
                raise ProxyConfigError(f"verifier health check failed: {exc}")
        if self.config.flow_log_path:
            self._flow_log = open(self.config.flow_log_path, "a", encoding="utf-8")
        listener = socket.create_server(
            (self.config.listen_host, self.config.listen_port)
        )
        listener.settimeout(0.25)
        self._listener = listener
        self.port = listener.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="stepguard-proxy-accept", daemon=True
        )
        self._accept_thread.start()

    def stop(self, grace: float = 3.0) -> None:
        self._shutdown.set()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=grace + 1.0)
        if self._listener is not None:
            self._listener.close()
        # Idle keep-alive connections sit in a blocking read and never
        # notice the shutdown flag; cut them loose without waiting.
        self._close_conns(only_idle=True)
        deadline = time.monotonic() + grace
        for thread in list(self._conn_threads):
            thread.join(timeout=max(0.0, deadline - time.monotonic()))
        self._close_conns(only_idle=False)
        for thread in list(self._conn_threads):
            if thread.is_alive():
                thread.join(timeout=1.0)
        if self._flow_log is not None:
            self._flow_log.close()
            self._flow_log = None
        self.verifier.close()

    def _close_conns(self, *, only_idle: bool) -> None:
        with self._conns_lock:
            states = list(self._conns.values())
        for state in states:
            if only_idle and state.busy:
                continue
            for sock in state.socks:
                # shutdown() wakes a thread blocked in recv; a bare
                # close() from another thread would not.
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    sock.close()
                except OSError:
                    pass

    def __enter__(self) -> "ProxyServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def address(self) -> tuple[str, int]:
        if self.port is None:
            raise RuntimeError("proxy not started")
        return (self.config.listen_host, self.port)

    def _accept_loop(self) -> None:
        while not self._shutdown.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            except OSError:
                pass
            thread = threading.Thread(
                target=self._connection_thread, args=(sock,), daemon=True
            )
            self._conn_threads.append(thread)
            thread.start()

    def _connection_thread(self, sock: socket.socket) -> None:
        self._track(sock)
        # A client hanging up mid-exchange is routine, not an error.
        try:
            self._handle_connection(sock)
        except (OSError, ssl.SSLError):
            pass
        finally:
            self._untrack()

    def _track(self, sock: socket.socket) -> None:
        with self._conns_lock:
            state = self._conns.setdefault(threading.get_ident(), _ConnState([]))
            state.socks.append(sock)

    def _set_busy(self, busy: bool) -> None:
        with self._conns_lock:
            state = self._conns.get(threading.get_ident())
            if state is not None:
                state.busy = busy

    def _untrack(self) -> None:
        with self._conns_lock:
            self._conns.pop(threading.get_ident(), None)

    # -- flow bookkeeping ----------------------------------------------

    def _record(self, record: FlowRecord) -> None:
        with self._flows_lock:
            self.flows.append(record)
            if self._flow_log is not None:
                self._flow_log.write(json.dumps(record.to_json()) + "\n")
                self._flow_log.flush()

    def flows_for(self, action_id: str) -> list[FlowRecord]:
        with self._flows_lock:
            return [f for f in self.flows if f.action_id == action_id]

    # -- connection handling -------------------------------------------

    def _handle_connection(self, sock: socket.socket) -> None:
        sock.settimeout(30.0)
        reader = sock.makefile("rb")
        try:
            while not self._shutdown.is_set():
                self._set_busy(False)
                try:
                    head = _read_head(reader)
                except (_BadRequest, UnicodeDecodeError):
                    sock.sendall(
                        _simple_response(
                            400, "Bad Request", b'{"error": "malformed request"}'
                        )
                    )
                    return
                except (socket.timeout, OSError):
                    return
                if head is None:
                    return
                self._set_busy(True)
                method, target, version, headers = head
                if method == "CONNECT":
                    reader.detach()
                    self._handle_connect(sock, target)
                    return
                keep_alive = self._handle_plain(
                    sock, reader, method, target, headers
                )
                if not keep_alive:
                    return
        finally:
            try:
                reader.close()
            except (OSError, ValueError):
                pass
            try:
                sock.close()
            except OSError:
                pass

    # -- CONNECT tunnels -----------------------------------------------

    def _handle_connect(self, sock: socket.socket, target: str) -> None:
        host, _, port_text = target.rpartition(":")
        try:
            port = int(port_text)
        except ValueError:
            sock.sendall(
                _simple_response(400, "Bad Request", b'{"error": "bad CONNECT target"}')
            )
            return
        host = host.strip("[]")
        if not self.config.intercepts(host):
            self._blind_tunnel(sock, host, port)
            return
        if self.config.leaf_store is None:
            sock.sendall(
                _simple_response(
                    502,
                    "Bad Gateway",
                    b'{"error": "interception requires an issuing certificate"}',
                )
            )
            return
        sock.sendall(b"HTTP/1.1 200 Connection Established\r\n\r\n")
        try:
            context = self.config.leaf_store.context_for(host)
            tls_sock = context.wrap_socket(sock, server_side=True)
        except (ssl.SSLError, OSError):
            return
        self._track(tls_sock)  # the wrap consumed the original socket's fd
        tls_sock.settimeout(30.0)
        reader = tls_sock.makefile("rb")
        try:
            while not self._shutdown.is_set():
                self._set_busy(False)
                try:
                    head = _read_head(reader)
                except (_BadRequest, UnicodeDecodeError):
                    tls_sock.sendall(
                        _simple_response(
                            400, "Bad Request", b'{"error": "malformed request"}'
                        )
                    )
                    return
                except (socket.timeout, OSError):
                    return
                if head is None:
                    return
                self._set_busy(True)
                method, path, version, headers = head
                if not path.startswith("/"):
                    # Absolute-form inside a tunnel is unusual; reduce it.
                    parsed = urllib.parse.urlsplit(path)
                    path = parsed.path or "/"
                    if parsed.query:
                        path += "?" + parsed.query
                try:
                    body = _read_body(reader, headers)
                except _BadRequest:
                    tls_sock.sendall(
                        _simple_response(
                            400, "Bad Request", b'{"error": "malformed body"}'
                        )
                    )
                    return
                keep_alive = self._gate_and_relay(
                    tls_sock,
                    method,
                    host,
                    port,
                    path,
                    headers,
                    body,
                    scheme="https",
                    intercepted=True,
                )
                if not keep_alive:
                    return
        finally:
            try:
                reader.close()
            except (OSError, ValueError):
                pass
            try:
                tls_sock.close()
            except OSError:
                pass

    def _blind_tunnel(self, sock: socket.socket, host: str, port: int) -> None:
        try:
            upstream = socket.create_connection(
                (host, port), timeout=self.config.upstream_timeout
            )
            upstream.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            sock.sendall(
                _simple_response(
                    502, "Bad Gateway", b'{"error": "upstream connect failed"}'
                )
            )
            return
        sock.sendall(b"HTTP/1.1 200 Connection Established\r\n\r\n")

        def pump(src: socket.socket, dst: socket.socket) -> None:
            try:
                while True:
                    data = src.recv(65536)
                    if not data:
                        break
                    dst.sendall(data)
            except OSError:
                pass
            finally:
                try:
                    dst.shutdown(socket.SHUT_WR)
                except OSError:
                    pass

        up = threading.Thread(target=pump, args=(sock, upstream), daemon=True)
        down = threading.Thread(target=pump, args=(upstream, sock), daemon=True)
        up.start()
        down.start()
        # A tunnel carries opaque bytes: there is no request boundary to
        # drain to, so shutdown may sever it like an idle connection.
        self._track(upstream)
        self._set_busy(False)
        up.join()
        down.join()
        upstream.close()

    # -- plain HTTP proxying -------------------------------------------

    def _handle_plain(
        self,
        sock: socket.socket,
        reader,
        method: str,
        target: str,
        headers: list[tuple[str, str]],
    ) -> bool:
        if target.startswith(("http://", "https://")):
            parsed = urllib.parse.urlsplit(target)
            host = parsed.hostname or ""
            port = parsed.port or (443 if parsed.scheme == "https" else 80)
            scheme = parsed.scheme
            path = parsed.path or "/"
            if parsed.query:
                path += "?" + parsed.query
        else:
            # Origin-form: a client talking to the proxy as if it were
            # the server itself.  Route by Host header.
            host_header = _header(headers, "host") or ""
            host, _, port_text = host_header.partition(":")
            if not host:
                sock.sendall(
                    _simple_response(
                        400, "Bad Request", b'{"error": "missing host"}'
                    )
                )
                return False
            port = int(port_text) if port_text.isdigit() else 80
            scheme = "http"
            path = target
        try:
            body = _read_body(reader, headers)
        except _BadRequest:
            sock.sendall(
                _simple_response(400, "Bad Request", b'{"error": "malformed body"}')
            )
            return False
        connection = (_header(headers, "connection") or "").lower()
        wants_close = "close" in connection
        if self.config.intercepts(host):
            alive = self._gate_and_relay(
                sock,
                method,
                host,
                port,
                path,
                headers,
                body,
                scheme=scheme,
                intercepted=False,
            )
        else:
            alive = self._relay_upstream(
                sock, method, scheme, host, port, path, headers, body,
                server_name=host,
            )
        return alive and not wants_close

    # -- the gate ------------------------------------------------------

    def _resolve_action(self, headers: list[tuple[str, str]]) -> tuple[str, str]:
        """Pick the step identity for a flow: static config wins, then
        the attribution header, then the unattributed placeholder."""
        if self.config.action_id is not None:
            return self.config.action_id, "static"
        claimed = _header(headers, ATTRIBUTION_HEADER)
        if claimed is not None and claimed.strip():
            return claimed.strip(), "header"
        return UNATTRIBUTED, "none"

    def _gate_and_relay(
        self,
        sock,
        method: str,
        host: str,
        port: int,
        path: str,
        headers: list[tuple[str, str]],
        body: bytes,
        scheme: str,
        intercepted: bool,
    ) -> bool:
        started = time.perf_counter()
        action_id, source = self._resolve_action(headers)
        default_port = 443 if scheme == "https" else 80
        netloc = host if port == default_port else f"{host}:{port}"
        url = f"{scheme}://{netloc}{path}"

        if source == "none" and self.config.mode is Mode.ENFORCEMENT:
            # No step identity means no policy can be consulted; in
            # enforcement mode that is a denial before the verifier is
            # even asked.
            payload = denial_body(None, None, None)
            sock.sendall(
                _simple_response(
                    403, "Forbidden", payload, extra=[(_DENIED_HEADER, "1")]
                )
            )
            self._record(
                FlowRecord(
                    timestamp=time.time(),
                    action_id=UNATTRIBUTED,
                    method=method,
                    host=host,
                    path=path,
                    decision="deny",
                    reason="unattributed-request",
                    scope=None,
                    required=None,
                    granted=None,
                    status=403,
                    latency_ms=(time.perf_counter() - started) * 1000.0,
                    intercepted=intercepted,
                )
            )
            return True

        infrastructure = False
        try:
            verdict = self.verifier.verify(action_id, method, url)
        except VerifierUnavailableError:
            if self.config.mode is Mode.ENFORCEMENT:
                # Fail closed: with the verifier gone nothing can be
                # shown to be permitted.
                payload = denial_body(None, None, None)
                sock.sendall(
                    _simple_response(
                        403, "Forbidden", payload, extra=[(_DENIED_HEADER, "1")]
                    )
                )
                self._record(
                    FlowRecord(
                        timestamp=time.time(),
                        action_id=action_id,
                        method=method,
                        host=host,
                        path=path,
                        decision="deny",
                        reason="verifier-unavailable",
                        scope=None,
                        required=None,
                        granted=None,
                        status=403,
                        latency_ms=(time.perf_counter() - started) * 1000.0,
                        intercepted=intercepted,
                        infrastructure=True,
                    )
                )
                return True
            verdict = {
                "allow": True,
                "reason": "verifier-unavailable",
                "scope": None,
                "level": None,
            }
            infrastructure = True

        scope = verdict.get("scope")
        required = verdict.get("level")
        granted = verdict.get("granted")
        if not verdict.get("allow", False):
            payload = denial_body(scope, required, granted)
            sock.sendall(
                _simple_response(
                    403, "Forbidden", payload, extra=[(_DENIED_HEADER, "1")]
                )
            )
            self._record(
                FlowRecord(
                    timestamp=time.time(),
                    action_id=action_id,
                    method=method,
                    host=host,
                    path=path,
                    decision="deny",
                    reason=verdict.get("reason", "denied"),
                    scope=scope,
                    required=required,
                    granted=granted,
                    status=403,
                    latency_ms=(time.perf_counter() - started) * 1000.0,
                    intercepted=intercepted,
                )
            )
            return True

        # Allowed: forward to the upstream override if one is set,
        # otherwise to the live host the client asked for.
        if self.config.upstream is not None:
            up = urllib.parse.urlsplit(self.config.upstream)
            up_scheme = up.scheme
            up_host = up.hostname
            up_port = up.port or (443 if up.scheme == "https" else 80)
        else:
            up_scheme, up_host, up_port = scheme, host, port
        status = self._relay_gated(
            sock,
            method,
            up_scheme,
            up_host,
            up_port,
            path,
            headers,
            body,
            server_name=host,
        )
        self._record(
            FlowRecord(
                timestamp=time.time(),
                action_id=action_id,
                method=method,
                host=host,
                path=path,
                decision="allow",
                reason=verdict.get("reason", "allowed"),
                scope=scope,
                required=required,
                granted=granted,
                status=status,
                latency_ms=(time.perf_counter() - started) * 1000.0,
                intercepted=intercepted,
                infrastructure=infrastructure,
            )
        )
        return status > 0

    # -- upstream relay ------------------------------------------------

    def _open_upstream(self, scheme: str, host: str, port: int):
        if scheme == "https":
            if self.config.upstream_ca is not None:
                context = ssl.create_default_context(cafile=self.config.upstream_ca)
            else:
                context = ssl.create_default_context()
            conn = HTTPSConnection(
                host,
                port,
                timeout=self.config.upstream_timeout,
                context=context,
            )
        else:
            conn = HTTPConnection(host, port, timeout=self.config.upstream_timeout)
        conn.connect()
        conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return conn

    def _relay_gated(
        self,
        sock,
        method: str,
        scheme: str,
        host: str,
        port: int,
        path: str,
        headers: list[tuple[str, str]],
        body: bytes,
        server_name: str,
    ) -> int:
        """Forward an allowed request and copy the response back.

        Returns the upstream status, or 0 when the client connection
        should be torn down.
        """
        conn = None
        try:
            conn = self._open_upstream(scheme, host, port)
            conn.putrequest(method, path, skip_host=True, skip_accept_encoding=True)
            sent_host = False
            for key, value in _forward_headers(headers):
                if key.lower() == "host":
                    sent_host = True
                conn.putheader(key, value)
            if not sent_host:
                conn.putheader("Host", server_name)
            if body and _header(headers, "content-length") is None:
                conn.putheader("Content-Length", str(len(body)))
            conn.endheaders(message_body=body if body else None)
            resp = conn.getresponse()
            payload = resp.read()
            status = resp.status
            reason = resp.reason
            out = [f"HTTP/1.1 {status} {reason}"]
            saw_length = False
            for key, value in resp.headers.items():
                if key.lower() in HOP_BY_HOP:
                    continue
                if key.lower() == "content-length":
                    saw_length = True
                out.append(f"{key}: {value}")
            if not saw_length and not _bodyless(method, status):
                # Upstream used chunked or EOF framing; the body is
                # already fully buffered, so re-frame with a length.
                out.append(f"Content-Length: {len(payload)}")
            blob = ("\r\n".join(out) + "\r\n\r\n").encode("latin-1")
            if not _bodyless(method, status):
                blob += payload
            sock.sendall(blob)
            return status
        except (OSError, ssl.SSLError):
            try:
                sock.sendall(
                    _simple_response(
                        502, "Bad Gateway", b'{"error": "upstream request failed"}'
                    )
                )
            except OSError:
                pass
            return 0
        finally:
            if conn is not None:
                conn.close()

    def _relay_upstream(
        self,
        sock,
        method: str,
        scheme: str,
        host: str,
        port: int,
        path: str,
        headers: list[tuple[str, str]],
        body: bytes,
        server_name: str,
    ) -> bool:
        """Pass-through for plain HTTP to hosts outside the API set."""
        status = self._relay_gated(
            sock, method, scheme, host, port, path, headers, body, server_name
        )
        return status > 0


def _bodyless(method: str, status: int) -> bool:
    return method == "HEAD" or status in (204, 304) or 100 <= status < 200
