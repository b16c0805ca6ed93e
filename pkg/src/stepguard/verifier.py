"""Allow/deny decisions for outbound API requests.

The verifier runs in one of two modes for the life of a session:

- Enforcement: fail closed.  A request is allowed only when its endpoint is
  recognised and the calling step's policy grants the inferred scope at the
  inferred level.  Unknown endpoints, missing policies, and insufficient
  policies all deny; an operator can opt unknown endpoints into
  allow-with-warning (``allow_unknown``), and that choice shows up in the
  decision rather than being silent.
- Learning: everything is allowed, and every recognised inference is recorded
  as an observation.  Deriving policies from the observation log yields, per
  action, exactly the union of what was seen: the least grant that would make
  the recorded traffic pass enforcement.

Traffic to hosts other than the API host is passed through in both modes and
never recorded; the verifier only holds opinions about API traffic.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field

from .endpoints import EndpointMap, InferredPermission, RequestDescriptor
from .model import AccessLevel, PermissionScope, PermissionSet, level_allows
from .policy import KnowledgeBase, StepPolicy, canonical_action_id
from .errors import PolicyError


class Mode(enum.Enum):
    ENFORCEMENT = "enforce"
    LEARNING = "learn"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ValueError(f"unknown mode: {text!r}")


class Verdict(enum.Enum):
    ALLOW = "allow"
    DENY = "deny"


class Reason:
    POLICY_SATISFIED = "policy-satisfied"
    POLICY_INSUFFICIENT = "policy-insufficient"
    NO_POLICY = "no-policy"
    UNKNOWN_ENDPOINT = "unknown-endpoint"
    LEARNING_MODE_ALLOW = "learning-mode-allow"


_DENY_REASONS = frozenset(
    {Reason.POLICY_INSUFFICIENT, Reason.NO_POLICY, Reason.UNKNOWN_ENDPOINT}
)


@dataclass(frozen=True)
class Decision:
    """One verdict, with enough context to audit it later."""

    verdict: Verdict
    reason: str
    inferred: InferredPermission
    action_id: str
    request: RequestDescriptor
    timestamp: float = field(default_factory=time.time)
    granted_level: AccessLevel | None = None

    @property
    def allow(self) -> bool:
        return self.verdict is Verdict.ALLOW

    def to_audit_record(self, mode: Mode) -> dict:
        return {
            "ts": self.timestamp,
            "mode": mode.value,
            "verdict": self.verdict.value,
            "reason": self.reason,
            "action_id": self.action_id,
            "method": self.request.method,
            "host": self.request.host,
            "path": self.request.path,
            "scope": self.inferred.scope.value if self.inferred.scope else None,
            "level": str(self.inferred.level) if self.inferred.level else None,
            "granted": str(self.granted_level) if self.granted_level is not None else None,
        }


def _safe_canonical(raw: str) -> str:
    try:
        return canonical_action_id(raw)
    except PolicyError:
        return raw.strip().casefold() or "unattributed"


def verify(
    request: RequestDescriptor,
    kb: KnowledgeBase,
    endpoint_map: EndpointMap,
    mode: Mode,
    *,
    allow_unknown: bool = False,
) -> Decision:
    """Decide one request.  Pure: no logging, no recording."""
    inferred = endpoint_map.infer(request)
    action_id = _safe_canonical(request.action_id)

    if inferred.kind == "not-api":
        return Decision(Verdict.ALLOW, Reason.POLICY_SATISFIED, inferred, action_id, request)

    if mode is Mode.LEARNING:
        return Decision(Verdict.ALLOW, Reason.LEARNING_MODE_ALLOW, inferred, action_id, request)

    if not inferred.is_known:
        verdict = Verdict.ALLOW if allow_unknown else Verdict.DENY
        return Decision(verdict, Reason.UNKNOWN_ENDPOINT, inferred, action_id, request)

    policy = kb.lookup(action_id)
    if policy is None:
        return Decision(Verdict.DENY, Reason.NO_POLICY, inferred, action_id, request)

    granted = policy.permissions.level_for(inferred.scope)
    if level_allows(granted, inferred.level):
        return Decision(
            Verdict.ALLOW, Reason.POLICY_SATISFIED, inferred, action_id, request,
            granted_level=granted,
        )
    return Decision(
        Verdict.DENY, Reason.POLICY_INSUFFICIENT, inferred, action_id, request,
        granted_level=granted,
    )


@dataclass(frozen=True)
class Observation:
    """One distinct recognised request shape seen while learning."""

    action_id: str
    scope: PermissionScope
    level: AccessLevel
    method: str
    path: str
    count: int
    action_version: str | None = None


@dataclass(frozen=True)
class UnknownRecord:
    action_id: str
    method: str
    path: str


class ObservationLog:
    """Thread-safe accumulator for learning mode.

    Recognised inferences are counted by (action, scope, level, method,
    path); unrecognised requests go to a separate unknown log and are never
    folded into derived policies.  Traffic to the API's query endpoint
    (``/graphql``) is additionally tallied on its own so reports can show the
    blind spot explicitly.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: dict[tuple[str, PermissionScope, AccessLevel, str, str], int] = {}
        self._versions: dict[tuple[str, PermissionScope, AccessLevel, str, str], str | None] = {}
        self._unknown: list[UnknownRecord] = []
        self._graphql = 0

    def record(self, decision: Decision) -> None:
        request = decision.request
        raw = request.action_id.strip()
        version = raw.rpartition("@")[2] if "@" in raw else None
        inferred = decision.inferred
        if inferred.kind == "not-api":
            return
        with self._lock:
            if inferred.is_known:
                key = (
                    decision.action_id,
                    inferred.scope,
                    inferred.level,
                    request.method,
                    request.path,
                )
                self._counts[key] = self._counts.get(key, 0) + 1
                self._versions.setdefault(key, version)
            else:
                self._unknown.append(
                    UnknownRecord(decision.action_id, request.method, request.path)
                )
                if request.path == "/graphql":
                    self._graphql += 1

    def observations(self) -> list[Observation]:
        with self._lock:
            return [
                Observation(*key, count=count, action_version=self._versions[key])
                for key, count in sorted(
                    self._counts.items(),
                    key=lambda item: (item[0][0], item[0][1].value, item[0][3], item[0][4]),
                )
            ]

    def unknown_requests(self) -> list[UnknownRecord]:
        with self._lock:
            return list(self._unknown)

    @property
    def graphql_count(self) -> int:
        with self._lock:
            return self._graphql

    def __len__(self) -> int:
        with self._lock:
            return len(self._counts)


def derive_policies(log: ObservationLog) -> list[StepPolicy]:
    """Union each action's observations into its least sufficient policy."""
    unions: dict[str, PermissionSet] = {}
    for obs in log.observations():
        addition = PermissionSet({obs.scope: obs.level})
        unions[obs.action_id] = unions.get(obs.action_id, PermissionSet()).union(addition)
    return [
        StepPolicy(action_id, permissions)
        for action_id, permissions in sorted(unions.items())
    ]
