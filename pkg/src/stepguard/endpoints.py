"""REST request to token-permission inference.

Given an outbound request (method, host, path) the mapper answers: which
permission scope does this call exercise, and at what level?  Resolution runs
in three stages:

1. Host gate.  Anything not addressed to the configured API host is reported
   as not-api and never consulted further; the mapper only has an opinion
   about API traffic.
2. Exact-route trie.  Curated route patterns such as
   ``/repos/{owner}/{repo}/pulls/{pull_number}/reviews`` are compiled into a
   segment trie whose edges are either literals or a single placeholder slot.
   A placeholder matches exactly one nonempty segment.  When several patterns
   of the same length match a path, the literal branch wins over the
   placeholder branch at the earliest point they diverge, which is the usual
   router precedence and keeps specific routes like ``.../releases/latest``
   ahead of ``.../releases/{id}``.  Matches carry an explicit level per
   method, so irregular routes (an id-token route whose GET still implies
   write, say) stay representable.
3. Pattern fallback.  Paths with no curated route are classified by shape:
   recognise the resource family from the leading segment (``repos``,
   ``orgs``, ``users``, ``projects``), then look for the first segment after
   the family's identifier slots that names a resource group (``pulls``,
   ``issues``, ``check-runs``, ...).  The level is read for GET/HEAD and
   write for everything else.  The ``projects`` family is its own
   discriminator: classic project routes (``/projects/{id}/columns``) carry
   no further keyword, so the family prefix alone selects the
   repository-projects scope.

Anything left over, including ``/graphql``, is unknown.  Enforcement treats
unknown as deny, so stage 3 widening a little is safer than it sounds: a
wrong scope can only ever be compared against the caller's policy, while a
missed route would silently bypass nothing.

Paths are normalised before matching: query and fragment are ignored,
duplicate slashes collapse, one trailing slash is dropped, and each segment
is percent-decoded (segments that fail to decode are matched raw).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from urllib.parse import unquote, urlsplit

from .errors import EndpointMapError
from .model import AccessLevel, PermissionScope

DEFAULT_API_HOST = "api.github.com"

_READ_METHODS = frozenset({"GET", "HEAD"})

_METHOD_TOKENS = frozenset(
    {"GET", "HEAD", "POST", "PUT", "PATCH", "DELETE", "OPTIONS"}
)


@dataclass(frozen=True)
class RequestDescriptor:
    """An outbound request reduced to what inference needs.

    method is uppercased, host lowercased, path absolute with query and
    fragment already removed.  action_id is the attribution tag exactly as
    the caller supplied it.
    """

    method: str
    host: str
    path: str
    action_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", self.method.strip().upper())
        object.__setattr__(self, "host", self.host.strip().lower())
        if not self.method:
            raise ValueError("request method is empty")
        if not self.host:
            raise ValueError("request host is empty")
        if not self.path.startswith("/"):
            raise ValueError(f"request path must be absolute: {self.path!r}")

    @classmethod
    def from_url(cls, method: str, url: str, action_id: str) -> "RequestDescriptor":
        parts = urlsplit(url)
        if not parts.hostname:
            raise ValueError(f"URL has no host: {url!r}")
        return cls(
            method=method,
            host=parts.hostname,
            path=parts.path or "/",
            action_id=action_id,
        )

    @property
    def url(self) -> str:
        return f"https://{self.host}{self.path}"


class InferenceKind:
    KNOWN = "known"
    UNKNOWN = "unknown"
    NOT_API = "not-api"


@dataclass(frozen=True)
class InferredPermission:
    kind: str
    scope: PermissionScope | None = None
    level: AccessLevel | None = None

    @classmethod
    def known(cls, scope: PermissionScope, level: AccessLevel) -> "InferredPermission":
        return cls(InferenceKind.KNOWN, scope, level)

    @classmethod
    def unknown(cls) -> "InferredPermission":
        return cls(InferenceKind.UNKNOWN)

    @classmethod
    def not_api(cls) -> "InferredPermission":
        return cls(InferenceKind.NOT_API)

    @property
    def is_known(self) -> bool:
        return self.kind == InferenceKind.KNOWN


@dataclass(frozen=True)
class EndpointEntry:
    """One curated route: a path pattern plus the grant one method needs."""

    method: str
    path_pattern: str
    scope: PermissionScope
    level: AccessLevel

    @property
    def shape(self) -> tuple[str, ...]:
        """Pattern segments with placeholder names erased, for dedup."""
        return tuple(
            "{}" if _is_placeholder(s) else s for s in split_segments(self.path_pattern)
        )


def _is_placeholder(segment: str) -> bool:
    return len(segment) > 2 and segment.startswith("{") and segment.endswith("}")


def split_segments(path: str) -> tuple[str, ...]:
    """Split a normalised path into segments; root is the empty tuple."""
    return tuple(s for s in path.split("/") if s)


def normalize_path(path: str) -> str:
    """Collapse duplicate slashes and drop a trailing slash."""
    collapsed = []
    prev_slash = False
    for ch in path:
        if ch == "/":
            if prev_slash:
                continue
            prev_slash = True
        else:
            prev_slash = False
        collapsed.append(ch)
    text = "".join(collapsed)
    if len(text) > 1 and text.endswith("/"):
        text = text[:-1]
    return text or "/"


def match_segments(path: str) -> tuple[str, ...]:
    """Segments used for matching: normalised split, then each segment
    percent-decoded on its own.  Decoding after the split means an encoded
    slash can never manufacture an extra segment."""
    return tuple(_decode_segment(s) for s in split_segments(normalize_path(path)))


def _decode_segment(segment: str) -> str:
    try:
        return unquote(segment, errors="strict")
    except UnicodeDecodeError:
        return segment


@dataclass
class _TrieNode:
    children: dict[str, "_TrieNode"] = field(default_factory=dict)
    placeholder: "_TrieNode | None" = None
    # method -> (scope, level) at an accepting node
    grants: dict[str, tuple[PermissionScope, AccessLevel]] = field(default_factory=dict)


class _RouteTrie:
    def __init__(self) -> None:
        self.root = _TrieNode()

    def insert(self, entry: EndpointEntry) -> None:
        node = self.root
        for segment in entry.shape:
            if segment == "{}":
                if node.placeholder is None:
                    node.placeholder = _TrieNode()
                node = node.placeholder
            else:
                node = node.children.setdefault(segment, _TrieNode())
        if entry.method in node.grants:
            raise EndpointMapError(
                f"duplicate route entry: {entry.method} {entry.path_pattern}"
            )
        node.grants[entry.method] = (entry.scope, entry.level)

    def lookup(
        self, segments: tuple[str, ...], method: str
    ) -> tuple[PermissionScope, AccessLevel] | None:
        """First full match carrying ``method``, literal branches first.

        Depth-first with the literal edge tried before the placeholder edge
        realises the precedence rule: among all matching patterns the one
        that is literal at the earliest divergence wins.
        """

        def walk(node: _TrieNode, index: int) -> tuple[PermissionScope, AccessLevel] | None:
            if index == len(segments):
                return node.grants.get(method)
            segment = segments[index]
            child = node.children.get(segment)
            if child is not None:
                found = walk(child, index + 1)
                if found is not None:
                    return found
            if node.placeholder is not None and segment:
                return walk(node.placeholder, index + 1)
            return None

        return walk(self.root, 0)


# Fallback resource-group keywords: first matching segment selects the scope.
SEGMENT_SCOPES: dict[str, PermissionScope] = {
    "pulls": PermissionScope.PULL_REQUESTS,
    "issues": PermissionScope.ISSUES,
    "contents": PermissionScope.CONTENTS,
    "deployments": PermissionScope.DEPLOYMENTS,
    "check-runs": PermissionScope.CHECKS,
    "check-suites": PermissionScope.CHECKS,
    "statuses": PermissionScope.STATUSES,
    "packages": PermissionScope.PACKAGES,
    "code-scanning": PermissionScope.SECURITY_EVENTS,
    "actions": PermissionScope.ACTIONS,
    "pages": PermissionScope.PAGES,
    "discussions": PermissionScope.DISCUSSIONS,
    "attestations": PermissionScope.ATTESTATIONS,
    "projects": PermissionScope.REPOSITORY_PROJECTS,
}

# family root segment -> number of identifier segments to skip before
# scanning for a resource-group keyword.
_FAMILY_SKIP = {
    "repos": 2,   # /repos/{owner}/{repo}/...
    "orgs": 1,    # /orgs/{org}/...
    "users": 1,   # /users/{username}/...
}


def _pattern_fallback(method: str, segments: tuple[str, ...]) -> InferredPermission:
    if not segments:
        return InferredPermission.unknown()
    family = segments[0]
    level = AccessLevel.READ if method in _READ_METHODS else AccessLevel.WRITE
    if family == "projects":
        return InferredPermission.known(PermissionScope.REPOSITORY_PROJECTS, level)
    skip = _FAMILY_SKIP.get(family)
    if skip is None:
        return InferredPermission.unknown()
    for segment in segments[1 + skip:]:
        scope = SEGMENT_SCOPES.get(segment)
        if scope is not None:
            if scope is PermissionScope.ID_TOKEN:  # defensive; not in table
                return InferredPermission.unknown()
            return InferredPermission.known(scope, level)
    return InferredPermission.unknown()


class EndpointMap:
    """Compiled route knowledge for one API host."""

    def __init__(
        self,
        entries: list[EndpointEntry] | tuple[EndpointEntry, ...],
        *,
        api_host: str = DEFAULT_API_HOST,
    ) -> None:
        self.api_host = api_host.strip().lower()
        if not self.api_host:
            raise EndpointMapError("api_host is empty")
        self.entries: tuple[EndpointEntry, ...] = tuple(entries)
        self._trie = _RouteTrie()
        seen: set[tuple[tuple[str, ...], str]] = set()
        for i, entry in enumerate(self.entries):
            key = (entry.shape, entry.method)
            if key in seen:
                raise EndpointMapError(
                    f"entry {i}: duplicate pattern/method {entry.method} {entry.path_pattern}"
                )
            seen.add(key)
            self._trie.insert(entry)

    def trie_lookup(
        self, path: str, method: str
    ) -> tuple[PermissionScope, AccessLevel] | None:
        """Stage-2 lookup only, exposed for equivalence testing."""
        return self._trie.lookup(match_segments(path), method.upper())

    def infer(self, request: RequestDescriptor) -> InferredPermission:
        if request.host != self.api_host:
            return InferredPermission.not_api()
        segments = match_segments(request.path)
        hit = self._trie.lookup(segments, request.method)
        if hit is not None:
            return InferredPermission.known(*hit)
        return _pattern_fallback(request.method, segments)

    @classmethod
    def load(cls, text: str, *, api_host: str = DEFAULT_API_HOST) -> "EndpointMap":
        """Parse a route document: a JSON array of records, or one JSON
        record per line.  Each record carries method, path_pattern, scope,
        level."""
        records = _parse_records(text)
        entries = [_entry_from_record(i, r) for i, r in enumerate(records)]
        return cls(entries, api_host=api_host)

    @classmethod
    def load_file(cls, path: str | Path, *, api_host: str = DEFAULT_API_HOST) -> "EndpointMap":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise EndpointMapError(f"cannot read endpoint map: {exc}") from None
        return cls.load(text, api_host=api_host)

    @classmethod
    def bundled(cls, *, api_host: str = DEFAULT_API_HOST) -> "EndpointMap":
        """The seed map shipped with the package."""
        text = resources.files("stepguard.data").joinpath("endpoint_map.json").read_text("utf-8")
        return cls.load(text, api_host=api_host)


def _parse_records(text: str) -> list[dict]:
    stripped = text.lstrip()
    if not stripped:
        raise EndpointMapError("endpoint map document is empty")
    if stripped.startswith("["):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise EndpointMapError(f"endpoint map is not valid JSON: {exc}") from None
        if not isinstance(doc, list):
            raise EndpointMapError("endpoint map array expected")
        return doc
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise EndpointMapError(f"endpoint map line {lineno}: {exc}") from None
    return records


def _entry_from_record(index: int, record: object) -> EndpointEntry:
    if not isinstance(record, dict):
        raise EndpointMapError(f"entry {index}: record must be an object")
    missing = {"method", "path_pattern", "scope", "level"} - record.keys()
    if missing:
        raise EndpointMapError(f"entry {index}: missing fields {sorted(missing)}")
    method = str(record["method"]).upper()
    if method not in _METHOD_TOKENS:
        raise EndpointMapError(f"entry {index}: unknown method {record['method']!r}")
    pattern = str(record["path_pattern"])
    if not pattern.startswith("/"):
        raise EndpointMapError(f"entry {index}: path pattern must start with '/'")
    for segment in split_segments(pattern):
        if not segment:
            raise EndpointMapError(f"entry {index}: empty pattern segment")
        if ("{" in segment or "}" in segment) and not _is_placeholder(segment):
            raise EndpointMapError(
                f"entry {index}: malformed placeholder segment {segment!r}"
            )
    try:
        scope = PermissionScope.parse(str(record["scope"]))
        level = AccessLevel.parse(str(record["level"]))
    except Exception as exc:
        raise EndpointMapError(f"entry {index}: {exc}") from None
    if level is AccessLevel.NONE:
        raise EndpointMapError(f"entry {index}: level none is not a grant")
    if scope is PermissionScope.ID_TOKEN and level is AccessLevel.READ:
        raise EndpointMapError(f"entry {index}: id-token has no read level")
    return EndpointEntry(
        method=method,
        path_pattern=normalize_path(pattern),
        scope=scope,
        level=level,
    )
