"""Permission model for workflow API tokens.

The token permission system is a fixed set of fourteen scopes, each granted at
one of three levels forming the total order none < read < write.  A full grant
is modeled as a dense vector over all fourteen scopes (unspecified scopes are
none), which makes union and comparison pointwise and keeps the algebra honest:
union is the join of the product lattice and ``allows`` is its partial order.

One scope is irregular: id-token has no read level.  Requesting id-token read
is rejected everywhere a level is attached to a scope.

The severity table grades what an attacker gains from holding a scope at a
level.  The values are fixed data, not derived; tests pin every cell.
"""

from __future__ import annotations

import enum
from collections.abc import Iterator, Mapping

from .errors import ModelError


class AccessLevel(enum.IntEnum):
    """Grant level for a single scope.  Comparable: none < read < write."""

    NONE = 0
    READ = 1
    WRITE = 2

    @classmethod
    def parse(cls, text: str) -> "AccessLevel":
        try:
            return _LEVEL_BY_NAME[text]
        except KeyError:
            raise ModelError(f"unknown access level: {text!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


_LEVEL_BY_NAME = {
    "none": AccessLevel.NONE,
    "read": AccessLevel.READ,
    "write": AccessLevel.WRITE,
}


class PermissionScope(enum.Enum):
    """The closed set of token permission scopes."""

    CONTENTS = "contents"
    DEPLOYMENTS = "deployments"
    PACKAGES = "packages"
    PULL_REQUESTS = "pull-requests"
    SECURITY_EVENTS = "security-events"
    ACTIONS = "actions"
    CHECKS = "checks"
    STATUSES = "statuses"
    ISSUES = "issues"
    REPOSITORY_PROJECTS = "repository-projects"
    ATTESTATIONS = "attestations"
    ID_TOKEN = "id-token"
    DISCUSSIONS = "discussions"
    PAGES = "pages"

    @classmethod
    def parse(cls, text: str) -> "PermissionScope":
        try:
            return _SCOPE_BY_NAME[text]
        except KeyError:
            raise ModelError(f"unknown permission scope: {text!r}") from None

    def __str__(self) -> str:
        return self.value


_SCOPE_BY_NAME = {scope.value: scope for scope in PermissionScope}

# Canonical scope order used for vectors and rendered reports.
SCOPE_ORDER: tuple[PermissionScope, ...] = tuple(PermissionScope)
_SCOPE_INDEX = {scope: i for i, scope in enumerate(SCOPE_ORDER)}


class Severity(enum.Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"
    NOT_APPLICABLE = "NotApplicable"

    def __str__(self) -> str:
        return self.value


def level_allows(granted: AccessLevel, required: AccessLevel) -> bool:
    """True when a grant at ``granted`` satisfies a need for ``required``.

    Write implies read implies none; this is just >= on the total order.
    """
    return granted >= required


def _check_id_token(scope: PermissionScope, level: AccessLevel) -> None:
    if scope is PermissionScope.ID_TOKEN and level is AccessLevel.READ:
        raise ModelError("id-token has no read level")


class PermissionSet:
    """Immutable dense grant vector over all fourteen scopes.

    Construct from a sparse mapping with :meth:`from_mapping`; scopes left out
    default to none.  Instances hash and compare by value.
    """

    __slots__ = ("_levels",)

    def __init__(self, levels: Mapping[PermissionScope, AccessLevel] | None = None) -> None:
        vector = [AccessLevel.NONE] * len(SCOPE_ORDER)
        if levels:
            for scope, level in levels.items():
                if not isinstance(scope, PermissionScope):
                    raise ModelError(f"not a permission scope: {scope!r}")
                if not isinstance(level, AccessLevel):
                    raise ModelError(f"not an access level: {level!r}")
                _check_id_token(scope, level)
                vector[_SCOPE_INDEX[scope]] = level
        object.__setattr__(self, "_levels", tuple(vector))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("PermissionSet is immutable")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str | PermissionScope, str | AccessLevel]) -> "PermissionSet":
        """Build from names, e.g. ``{"contents": "read"}``.  Unknown names raise."""
        levels: dict[PermissionScope, AccessLevel] = {}
        for raw_scope, raw_level in mapping.items():
            scope = raw_scope if isinstance(raw_scope, PermissionScope) else PermissionScope.parse(raw_scope)
            level = raw_level if isinstance(raw_level, AccessLevel) else AccessLevel.parse(raw_level)
            levels[scope] = level
        return cls(levels)

    def level_for(self, scope: PermissionScope) -> AccessLevel:
        return self._levels[_SCOPE_INDEX[scope]]

    __getitem__ = level_for

    def union(self, other: "PermissionSet") -> "PermissionSet":
        """Pointwise join: the least grant satisfying both operands."""
        merged = PermissionSet()
        vector = tuple(
            a if a >= b else b
            for a, b in zip(self._levels, other._levels)
        )
        object.__setattr__(merged, "_levels", vector)
        return merged

    __or__ = union

    def allows(self, required: "PermissionSet") -> bool:
        """True when this grant meets or exceeds ``required`` on every scope."""
        return all(
            granted >= needed
            for granted, needed in zip(self._levels, required._levels)
        )

    def scopes_at(self, minimum: AccessLevel) -> tuple[PermissionScope, ...]:
        """Scopes granted at or above ``minimum`` (excluding none)."""
        if minimum is AccessLevel.NONE:
            minimum = AccessLevel.READ
        return tuple(
            scope for scope in SCOPE_ORDER if self.level_for(scope) >= minimum
        )

    def to_sparse(self) -> dict[str, str]:
        """Sparse name mapping omitting none-level scopes, in canonical order."""
        return {
            scope.value: str(self.level_for(scope))
            for scope in SCOPE_ORDER
            if self.level_for(scope) is not AccessLevel.NONE
        }

    def items(self) -> Iterator[tuple[PermissionScope, AccessLevel]]:
        for scope in SCOPE_ORDER:
            yield scope, self.level_for(scope)

    def __bool__(self) -> bool:
        return any(level is not AccessLevel.NONE for level in self._levels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PermissionSet):
            return NotImplemented
        return self._levels == other._levels

    def __hash__(self) -> int:
        return hash(self._levels)

    def __repr__(self) -> str:
        sparse = self.to_sparse()
        return f"PermissionSet({sparse!r})" if sparse else "PermissionSet()"


EMPTY_PERMISSIONS = PermissionSet()

ALL_WRITE = PermissionSet({scope: AccessLevel.WRITE for scope in SCOPE_ORDER})

# Read on every scope that has a read level; id-token stays none.
ALL_READ = PermissionSet({
    scope: AccessLevel.READ
    for scope in SCOPE_ORDER
    if scope is not PermissionScope.ID_TOKEN
})


_S = PermissionScope
_V = Severity

# Risk grading per (scope, level).  Read column first, then write.
SEVERITY_TABLE: dict[tuple[PermissionScope, AccessLevel], Severity] = {
    (_S.CONTENTS, AccessLevel.READ): _V.LOW,
    (_S.CONTENTS, AccessLevel.WRITE): _V.CRITICAL,
    (_S.DEPLOYMENTS, AccessLevel.READ): _V.LOW,
    (_S.DEPLOYMENTS, AccessLevel.WRITE): _V.CRITICAL,
    (_S.PACKAGES, AccessLevel.READ): _V.LOW,
    (_S.PACKAGES, AccessLevel.WRITE): _V.HIGH,
    (_S.PULL_REQUESTS, AccessLevel.READ): _V.LOW,
    (_S.PULL_REQUESTS, AccessLevel.WRITE): _V.HIGH,
    (_S.SECURITY_EVENTS, AccessLevel.READ): _V.MEDIUM,
    (_S.SECURITY_EVENTS, AccessLevel.WRITE): _V.HIGH,
    (_S.ACTIONS, AccessLevel.READ): _V.LOW,
    (_S.ACTIONS, AccessLevel.WRITE): _V.HIGH,
    (_S.CHECKS, AccessLevel.READ): _V.LOW,
    (_S.CHECKS, AccessLevel.WRITE): _V.MEDIUM,
    (_S.STATUSES, AccessLevel.READ): _V.LOW,
    (_S.STATUSES, AccessLevel.WRITE): _V.MEDIUM,
    (_S.ISSUES, AccessLevel.READ): _V.LOW,
    (_S.ISSUES, AccessLevel.WRITE): _V.LOW,
    (_S.REPOSITORY_PROJECTS, AccessLevel.READ): _V.LOW,
    (_S.REPOSITORY_PROJECTS, AccessLevel.WRITE): _V.LOW,
    (_S.ATTESTATIONS, AccessLevel.READ): _V.LOW,
    (_S.ATTESTATIONS, AccessLevel.WRITE): _V.MEDIUM,
    (_S.ID_TOKEN, AccessLevel.READ): _V.NOT_APPLICABLE,
    (_S.ID_TOKEN, AccessLevel.WRITE): _V.CRITICAL,
    (_S.DISCUSSIONS, AccessLevel.READ): _V.LOW,
    (_S.DISCUSSIONS, AccessLevel.WRITE): _V.LOW,
    (_S.PAGES, AccessLevel.READ): _V.LOW,
    (_S.PAGES, AccessLevel.WRITE): _V.MEDIUM,
}


def severity_of(scope: PermissionScope, level: AccessLevel) -> Severity:
    """Grade holding ``scope`` at ``level``.  Level none is not gradeable."""
    if level is AccessLevel.NONE:
        raise ModelError("severity is defined for read and write grants only")
    return SEVERITY_TABLE[(scope, level)]
