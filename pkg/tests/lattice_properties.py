"""Algebraic laws of the permission model, written as plain predicates.

Both the unit suite and the acceptance suite run these through hypothesis;
keeping the bodies here means the two runs check literally the same laws.
"""

from __future__ import annotations

from stepguard.model import (
    EMPTY_PERMISSIONS,
    SCOPE_ORDER,
    AccessLevel,
    PermissionSet,
    level_allows,
)


def check_union_commutative(a: PermissionSet, b: PermissionSet) -> None:
    assert a.union(b) == b.union(a)


def check_union_associative(a: PermissionSet, b: PermissionSet, c: PermissionSet) -> None:
    assert a.union(b).union(c) == a.union(b.union(c))


def check_union_idempotent(a: PermissionSet) -> None:
    assert a.union(a) == a


def check_union_identity(a: PermissionSet) -> None:
    assert a.union(EMPTY_PERMISSIONS) == a
    assert EMPTY_PERMISSIONS.union(a) == a


def check_union_is_least_upper_bound(a: PermissionSet, b: PermissionSet) -> None:
    joined = a.union(b)
    assert joined.allows(a) and joined.allows(b)
    # Pointwise, the join never exceeds whichever operand was higher.
    for scope in SCOPE_ORDER:
        assert joined.level_for(scope) == max(a.level_for(scope), b.level_for(scope))


def check_allows_reflexive(a: PermissionSet) -> None:
    assert a.allows(a)


def check_allows_antisymmetric(a: PermissionSet, b: PermissionSet) -> None:
    if a.allows(b) and b.allows(a):
        assert a == b


def check_allows_transitive(a: PermissionSet, b: PermissionSet, c: PermissionSet) -> None:
    if a.allows(b) and b.allows(c):
        assert a.allows(c)


def check_union_monotone(a: PermissionSet, b: PermissionSet, c: PermissionSet) -> None:
    # Growing a grant never revokes anything it already satisfied.
    if a.allows(c):
        assert a.union(b).allows(c)


def check_level_order(granted: AccessLevel, required: AccessLevel) -> None:
    assert level_allows(granted, required) == (int(granted) >= int(required))
    assert level_allows(AccessLevel.WRITE, required)
    assert level_allows(granted, AccessLevel.NONE)


ALL_BINARY = [
    check_union_commutative,
    check_union_is_least_upper_bound,
    check_allows_antisymmetric,
]
ALL_TERNARY = [
    check_union_associative,
    check_allows_transitive,
    check_union_monotone,
]
ALL_UNARY = [
    check_union_idempotent,
    check_union_identity,
    check_allows_reflexive,
]
