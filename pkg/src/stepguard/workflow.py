"""Workflow document parsing.

Parses CI workflow YAML into a small typed model: a workflow has triggers, an
optional permission block, and jobs made of steps.  Only the fields the
analyses need are modeled; runner labels, env blocks, and the like are
accepted and dropped.  ``${{ }}`` expressions are carried through as opaque
text, never evaluated.

Two deliberate quirks of the format are handled here so callers never see
them: YAML 1.1 reads a bare ``on`` key as boolean true, and permission blocks
admit the ``read-all`` / ``write-all`` scalar shorthands next to the usual
scope map.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import yaml

from .errors import WorkflowParseError, WorkflowValidationError
from .model import ALL_READ, ALL_WRITE, AccessLevel, PermissionScope, PermissionSet
from .errors import ModelError


class _UnspecifiedDefault:
    """Marker for a job that declares no permission block anywhere.

    Such jobs run with the platform's configured default grant, which the
    analyzer models as all-scopes-write unless told otherwise.  Kept distinct
    from an explicit empty block, which grants nothing.
    """

    _instance: "_UnspecifiedDefault | None" = None

    def __new__(cls) -> "_UnspecifiedDefault":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNSPECIFIED_DEFAULT"


UNSPECIFIED_DEFAULT = _UnspecifiedDefault()


@dataclass(frozen=True)
class ActionRef:
    """A step's action reference, split into name and pinned version."""

    name: str
    version: str | None = None

    @classmethod
    def parse(cls, text: str) -> "ActionRef":
        text = text.strip()
        if not text:
            raise WorkflowValidationError("empty action reference")
        if "@" in text:
            name, _, version = text.rpartition("@")
            if not name:
                raise WorkflowValidationError(f"malformed action reference: {text!r}")
            return cls(name=name, version=version or None)
        return cls(name=text, version=None)

    def __str__(self) -> str:
        return f"{self.name}@{self.version}" if self.version else self.name


@dataclass(frozen=True)
class Step:
    """One workflow step: either an action invocation or a shell command."""

    action: ActionRef | None = None
    run: str | None = None
    name: str | None = None
    inputs: tuple[tuple[str, str], ...] = ()
    calls_reusable_workflow: bool = False

    @property
    def is_action(self) -> bool:
        return self.action is not None

    @property
    def is_command(self) -> bool:
        return self.run is not None

    def inputs_dict(self) -> dict[str, str]:
        return dict(self.inputs)


@dataclass(frozen=True)
class Job:
    id: str
    steps: tuple[Step, ...]
    name: str | None = None
    permissions: PermissionSet | None = None
    needs: tuple[str, ...] = ()
    condition: str | None = None
    uses_matrix: bool = False


@dataclass(frozen=True)
class Workflow:
    name: str | None
    triggers: tuple[str, ...]
    jobs: tuple[Job, ...]
    permissions: PermissionSet | None = None
    source: str = "<string>"

    def job(self, job_id: str) -> Job:
        for job in self.jobs:
            if job.id == job_id:
                return job
        raise KeyError(job_id)


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of last-wins."""


def _construct_mapping(loader: _StrictLoader, node: yaml.MappingNode, deep: bool = False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        try:
            if key in seen:
                raise WorkflowValidationError(
                    f"duplicate mapping key {key!r} at line {key_node.start_mark.line + 1}"
                )
            seen.add(key)
        except TypeError:
            pass  # unhashable key; let the base loader complain
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def _get(mapping: dict, key: str):
    """Fetch a key, tolerating YAML 1.1 turning bare ``on``/``off`` into bools."""
    if key in mapping:
        return mapping[key]
    if key == "on" and True in mapping:
        return mapping[True]
    return None


def _scalar_text(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    return str(value)


def parse_permissions(raw: object, *, where: str) -> PermissionSet:
    """Parse a permission block: a scope map or a read-all/write-all scalar."""
    if isinstance(raw, str):
        if raw == "read-all":
            return ALL_READ
        if raw == "write-all":
            return ALL_WRITE
        raise WorkflowValidationError(f"{where}: unknown permissions shorthand {raw!r}")
    if raw is None:
        # An explicitly empty block grants nothing.
        return PermissionSet()
    if not isinstance(raw, dict):
        raise WorkflowValidationError(f"{where}: permissions must be a mapping or shorthand")
    levels: dict[PermissionScope, AccessLevel] = {}
    for raw_scope, raw_level in raw.items():
        if not isinstance(raw_scope, str) or not isinstance(raw_level, str):
            raise WorkflowValidationError(
                f"{where}: permission entries must be scope: level strings"
            )
        try:
            scope = PermissionScope.parse(raw_scope)
            level = AccessLevel.parse(raw_level)
            if scope is PermissionScope.ID_TOKEN and level is AccessLevel.READ:
                raise ModelError("id-token has no read level")
        except ModelError as exc:
            raise WorkflowValidationError(f"{where}: {exc}") from None
        levels[scope] = level
    return PermissionSet(levels)


def _parse_triggers(raw: object, *, where: str) -> tuple[str, ...]:
    if isinstance(raw, str):
        events = [raw]
    elif isinstance(raw, list):
        events = [str(item) for item in raw]
    elif isinstance(raw, dict):
        events = [str(key) for key in raw]
    elif raw is None:
        events = []
    else:
        raise WorkflowValidationError(f"{where}: unsupported trigger declaration")
    if not events:
        raise WorkflowValidationError(f"{where}: workflow declares no triggers")
    return tuple(events)


_REUSABLE_SUFFIXES = (".yml", ".yaml")


def _parse_step(raw: object, *, where: str) -> Step:
    if not isinstance(raw, dict):
        raise WorkflowValidationError(f"{where}: step must be a mapping")
    uses = raw.get("uses")
    run = raw.get("run")
    if uses is not None and run is not None:
        raise WorkflowValidationError(f"{where}: step declares both uses and run")
    if uses is None and run is None:
        raise WorkflowValidationError(f"{where}: step declares neither uses nor run")
    name = raw.get("name")
    if uses is not None:
        if not isinstance(uses, str):
            raise WorkflowValidationError(f"{where}: uses must be a string")
        ref = ActionRef.parse(uses)
        inputs_raw = raw.get("with", {}) or {}
        if not isinstance(inputs_raw, dict):
            raise WorkflowValidationError(f"{where}: with block must be a mapping")
        inputs = tuple((str(k), _scalar_text(v)) for k, v in inputs_raw.items())
        reusable = ref.name.endswith(_REUSABLE_SUFFIXES)
        return Step(
            action=ref,
            name=str(name) if name is not None else None,
            inputs=inputs,
            calls_reusable_workflow=reusable,
        )
    return Step(
        run=_scalar_text(run),
        name=str(name) if name is not None else None,
    )


def _parse_job(job_id: str, raw: object, *, where: str) -> Job:
    if not isinstance(raw, dict):
        raise WorkflowValidationError(f"{where}: job must be a mapping")
    steps_raw = raw.get("steps")
    if not isinstance(steps_raw, list) or not steps_raw:
        raise WorkflowValidationError(f"{where}: job has no steps")
    steps = tuple(
        _parse_step(step, where=f"{where} step {i + 1}")
        for i, step in enumerate(steps_raw)
    )
    permissions = None
    if "permissions" in raw:
        permissions = parse_permissions(raw["permissions"], where=where)
    needs_raw = raw.get("needs")
    if needs_raw is None:
        needs: tuple[str, ...] = ()
    elif isinstance(needs_raw, str):
        needs = (needs_raw,)
    elif isinstance(needs_raw, list):
        needs = tuple(str(n) for n in needs_raw)
    else:
        raise WorkflowValidationError(f"{where}: needs must be a string or list")
    condition = raw.get("if")
    strategy = raw.get("strategy")
    uses_matrix = isinstance(strategy, dict) and "matrix" in strategy
    name = raw.get("name")
    return Job(
        id=job_id,
        steps=steps,
        name=str(name) if name is not None else None,
        permissions=permissions,
        needs=needs,
        condition=_scalar_text(condition) if condition is not None else None,
        uses_matrix=uses_matrix,
    )


def parse_workflow(text: str, *, source: str = "<string>") -> Workflow:
    """Parse one workflow document.

    Raises WorkflowParseError for YAML-level problems (with line/column when
    the parser reports one) and WorkflowValidationError for schema problems.
    """
    try:
        doc = yaml.load(io.StringIO(text), Loader=_StrictLoader)
    except WorkflowValidationError:
        raise
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise WorkflowParseError(
            exc.problem or str(exc),
            source=source,
            line=(mark.line + 1) if mark else None,
            column=(mark.column + 1) if mark else None,
        ) from None
    except yaml.YAMLError as exc:
        raise WorkflowParseError(str(exc), source=source) from None

    if not isinstance(doc, dict):
        raise WorkflowValidationError(f"{source}: workflow document must be a mapping")

    triggers = _parse_triggers(_get(doc, "on"), where=source)

    permissions = None
    if "permissions" in doc:
        permissions = parse_permissions(doc["permissions"], where=source)

    jobs_raw = _get(doc, "jobs")
    if not isinstance(jobs_raw, dict) or not jobs_raw:
        raise WorkflowValidationError(f"{source}: workflow declares no jobs")
    jobs = []
    for job_id, job_raw in jobs_raw.items():
        job_id = str(job_id)
        jobs.append(_parse_job(job_id, job_raw, where=f"{source} job {job_id!r}"))
    job_ids = [job.id for job in jobs]
    if len(set(job_ids)) != len(job_ids):
        raise WorkflowValidationError(f"{source}: duplicate job identifiers")
    for job in jobs:
        for needed in job.needs:
            if needed not in job_ids:
                raise WorkflowValidationError(
                    f"{source}: job {job.id!r} needs unknown job {needed!r}"
                )

    name = _get(doc, "name")
    return Workflow(
        name=str(name) if name is not None else None,
        triggers=triggers,
        jobs=tuple(jobs),
        permissions=permissions,
        source=source,
    )


def parse_workflow_file(path: str | Path) -> Workflow:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise WorkflowParseError(f"cannot read workflow: {exc}", source=str(path)) from None
    return parse_workflow(text, source=str(path))


def iter_workflow_files(root: str | Path) -> Iterator[Path]:
    """Yield workflow files under ``root`` (or ``root`` itself) sorted by path."""
    root = Path(root)
    if root.is_file():
        yield root
        return
    yield from sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.suffix in _REUSABLE_SUFFIXES
    )


def effective_job_permissions(
    workflow: Workflow, job_id: str
) -> PermissionSet | _UnspecifiedDefault:
    """Resolve the grant a job runs with.

    Job-level block wins over workflow-level; with neither present the result
    is the UNSPECIFIED_DEFAULT marker, left for callers to interpret.
    """
    job = workflow.job(job_id)
    if job.permissions is not None:
        return job.permissions
    if workflow.permissions is not None:
        return workflow.permissions
    return UNSPECIFIED_DEFAULT


def serialize_workflow(workflow: Workflow) -> str:
    """Render the model back to YAML.

    Only modeled fields are emitted, so parse(serialize(w)) == w even though
    unmodeled keys from the original document are gone.
    """
    doc: dict = {}
    if workflow.name is not None:
        doc["name"] = workflow.name
    doc["on"] = list(workflow.triggers)
    if workflow.permissions is not None:
        doc["permissions"] = workflow.permissions.to_sparse()
    jobs: dict = {}
    for job in workflow.jobs:
        job_doc: dict = {}
        if job.name is not None:
            job_doc["name"] = job.name
        if job.permissions is not None:
            job_doc["permissions"] = job.permissions.to_sparse()
        if job.needs:
            job_doc["needs"] = list(job.needs)
        if job.condition is not None:
            job_doc["if"] = job.condition
        if job.uses_matrix:
            job_doc["strategy"] = {"matrix": {}}
        steps = []
        for step in job.steps:
            step_doc: dict = {}
            if step.name is not None:
                step_doc["name"] = step.name
            if step.is_action:
                step_doc["uses"] = str(step.action)
                if step.inputs:
                    step_doc["with"] = dict(step.inputs)
            else:
                step_doc["run"] = step.run
            steps.append(step_doc)
        job_doc["steps"] = steps
        jobs[job.id] = job_doc
    doc["jobs"] = jobs
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
