"""Per-step policy storage.

A knowledge base maps an action identifier to the permission set that action
needs.  On disk that is a directory of JSON files, one per action:

    { "<action-id>": { "<scope>": "read" | "write", ... } }

The filename stem is the encoded action id and must agree with the document
key; disagreement is rejected rather than guessed around.  Action ids are
canonicalised before any comparison: surrounding whitespace and a trailing
``@version`` pin are dropped and the rest is case-folded, mirroring how the
hosting platform resolves action names case-insensitively.  Because action
names contain ``/``, filenames use strict percent-encoding of the canonical
id (every character outside [A-Za-z0-9_.~-] escaped), which round-trips any
name unambiguously.

Hand-written policy files in the wild often carry bare level tokens
(``"issues": write,``) and trailing commas; ``lenient=True`` accepts those
two slips and nothing else.

A second on-disk shape, the consolidated document, holds many actions in one
JSON object and is the usual carrier for statically declared (rather than
runtime-learned) knowledge.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping
from urllib.parse import quote, unquote

from .errors import PolicyError
from .model import AccessLevel, PermissionScope, PermissionSet
from .errors import ModelError


class Provenance:
    RUNTIME_LEARNED = "runtime-learned"
    STATIC_DECLARED = "static-declared"


def canonical_action_id(raw: str) -> str:
    """Case-fold and drop a trailing ``@version`` pin.

    Stripping the pin can expose fresh edge whitespace, which is stripped
    again.  At most one pin is removed: platform action names cannot contain
    a bare ``@``, so a second one is never a version separator.
    """
    text = raw.strip()
    if "@" in text:
        head, _, _ = text.rpartition("@")
        if head.strip():
            text = head.strip()
    if not text:
        raise PolicyError(f"empty action id: {raw!r}")
    return text.casefold()


def encode_action_id(canonical: str) -> str:
    """Filename-safe encoding of a canonical action id."""
    return quote(canonical, safe="")


def decode_action_id(stem: str) -> str:
    return unquote(stem)


@dataclass(frozen=True)
class StepPolicy:
    """The permission grant one action is entitled to."""

    action_id: str
    permissions: PermissionSet

    def __post_init__(self) -> None:
        if not self.action_id:
            raise PolicyError("empty action id")


@dataclass
class KnowledgeBase:
    """A set of step policies plus where they came from."""

    policies: dict[str, StepPolicy] = field(default_factory=dict)
    provenance: str = Provenance.RUNTIME_LEARNED

    def lookup(self, raw_action_id: str) -> StepPolicy | None:
        try:
            return self.policies.get(canonical_action_id(raw_action_id))
        except PolicyError:
            return None

    def __len__(self) -> int:
        return len(self.policies)

    def __iter__(self) -> Iterator[StepPolicy]:
        return iter(self.policies.values())

    def action_ids(self) -> list[str]:
        return sorted(self.policies)


# Quotes bare read/write/none level tokens and drops trailing commas; the two
# slips hand-written policy files actually contain.
_BARE_LEVEL = re.compile(r'(:\s*)(read|write|none)(\s*[,}\]])')
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")


def _lenient_json(text: str) -> str:
    text = _BARE_LEVEL.sub(r'\1"\2"\3', text)
    return _TRAILING_COMMA.sub(r"\1", text)


def _parse_grants(raw: object, *, where: str) -> PermissionSet:
    if not isinstance(raw, dict):
        raise PolicyError(f"{where}: permission body must be an object")
    levels: dict[PermissionScope, AccessLevel] = {}
    for raw_scope, raw_level in raw.items():
        if not isinstance(raw_level, str):
            raise PolicyError(f"{where}: level for {raw_scope!r} must be a string")
        try:
            scope = PermissionScope.parse(str(raw_scope))
        except ModelError:
            raise PolicyError(f"{where}: unknown scope {raw_scope!r}") from None
        try:
            level = AccessLevel.parse(raw_level)
        except ModelError:
            raise PolicyError(
                f"{where}: unknown level {raw_level!r} for scope {raw_scope!r}"
            ) from None
        if scope is PermissionScope.ID_TOKEN and level is AccessLevel.READ:
            raise PolicyError(f"{where}: id-token has no read level")
        levels[scope] = level
    return PermissionSet(levels)


def parse_policy_document(
    text: str, *, lenient: bool = False, where: str = "<string>"
) -> StepPolicy:
    """Parse a single-action policy document."""
    if lenient:
        text = _lenient_json(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyError(f"{where}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or len(doc) != 1:
        raise PolicyError(f"{where}: document must hold exactly one action entry")
    (raw_id, grants), = doc.items()
    action_id = canonical_action_id(str(raw_id))
    return StepPolicy(action_id, _parse_grants(grants, where=where))


def load_policy_file(path: str | Path, *, lenient: bool = False) -> StepPolicy:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PolicyError(f"cannot read policy: {exc}") from None
    policy = parse_policy_document(text, lenient=lenient, where=str(path))
    from_stem = canonical_action_id(decode_action_id(path.stem))
    if from_stem != policy.action_id:
        raise PolicyError(
            f"{path}: filename decodes to {from_stem!r} "
            f"but document is keyed {policy.action_id!r}"
        )
    return policy


def load_knowledge(
    root: str | Path,
    *,
    lenient: bool = False,
    provenance: str = Provenance.RUNTIME_LEARNED,
) -> KnowledgeBase:
    """Load a knowledge directory of one-action policy files."""
    root = Path(root)
    if not root.is_dir():
        raise PolicyError(f"knowledge directory not found: {root}")
    kb = KnowledgeBase(provenance=provenance)
    for path in sorted(root.glob("*.json")):
        policy = load_policy_file(path, lenient=lenient)
        if policy.action_id in kb.policies:
            raise PolicyError(
                f"{path}: duplicate policy for {policy.action_id!r} after canonicalisation"
            )
        kb.policies[policy.action_id] = policy
    return kb


def load_consolidated(
    path: str | Path,
    *,
    lenient: bool = False,
    provenance: str = Provenance.STATIC_DECLARED,
) -> KnowledgeBase:
    """Load a consolidated many-action document."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PolicyError(f"cannot read knowledge document: {exc}") from None
    if lenient:
        text = _lenient_json(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise PolicyError(f"{path}: document must be an object of action entries")
    kb = KnowledgeBase(provenance=provenance)
    for raw_id, grants in doc.items():
        action_id = canonical_action_id(str(raw_id))
        if action_id in kb.policies:
            raise PolicyError(
                f"{path}: duplicate entry for {action_id!r} after canonicalisation"
            )
        kb.policies[action_id] = StepPolicy(
            action_id, _parse_grants(grants, where=f"{path}:{raw_id}")
        )
    return kb


def save_policy(root: str | Path, policy: StepPolicy) -> Path:
    """Write one policy file atomically; returns the path written.

    The document lands under its encoded canonical name via a temp file and
    rename, so a concurrent reader never sees a half-written document.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    target = root / f"{encode_action_id(policy.action_id)}.json"
    payload = json.dumps(
        {policy.action_id: policy.permissions.to_sparse()}, indent=2
    ) + "\n"
    fd, tmp_name = tempfile.mkstemp(dir=root, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return target


def save_knowledge(root: str | Path, policies: Mapping[str, StepPolicy] | list[StepPolicy]) -> list[Path]:
    items = policies.values() if isinstance(policies, Mapping) else policies
    return [save_policy(root, policy) for policy in items]
