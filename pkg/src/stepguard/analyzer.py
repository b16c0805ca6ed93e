"""Static analysis of workflow permission usage.

Given parsed workflows and a knowledge base of per-step requirements,
this module classifies jobs, computes the least job-level grant that
covers every step, flags jobs where that grant still exceeds what some
individual step needs, and quantifies how much write-capable surface a
step-level enforcement model removes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    EMPTY_PERMISSIONS,
    SCOPE_ORDER,
    AccessLevel,
    PermissionScope,
    PermissionSet,
    Severity,
    severity_of,
)
from .policy import KnowledgeBase
from .workflow import (
    Job,
    Workflow,
    WorkflowParseError,
    iter_workflow_files,
    parse_workflow_file,
)

#: The grant a job runs with when no permissions block exists anywhere:
#: the permissive legacy token.  It can write every scope except the
#: OIDC token, which is only minted when requested explicitly.
PERMISSIVE_DEFAULT = PermissionSet(
    {
        scope: AccessLevel.WRITE
        for scope in SCOPE_ORDER
        if scope is not PermissionScope.ID_TOKEN
    }
)

CLASS_IGNORED = "ignored"
CLASS_SINGLE = "single-step"
CLASS_MULTI = "multi-step"


@dataclass(frozen=True)
class StepCoverage:
    """One step whose requirements are known to the knowledge base."""

    index: int
    action_id: str
    required: PermissionSet


@dataclass(frozen=True)
class OverprivilegedScope:
    """A scope some covered step receives above its own need."""

    scope: PermissionScope
    level: AccessLevel
    severity: Severity


@dataclass(frozen=True)
class JobAnalysis:
    workflow_source: str
    workflow_name: str | None
    job_id: str
    classification: str
    total_steps: int
    covered: tuple[StepCoverage, ...]
    job_required: PermissionSet
    granted: PermissionSet
    granted_source: str
    overprivileged: bool
    overprivileged_scopes: tuple[OverprivilegedScope, ...]

    @property
    def covered_count(self) -> int:
        return len(self.covered)


@dataclass(frozen=True)
class AttackSurface:
    """Write-capable step counts for one job, before and after
    step-level enforcement."""

    job: JobAnalysis
    write_capable_steps: int
    write_needing_steps: int

    @property
    def reduction(self) -> float | None:
        """Fraction of write-capable steps enforcement strips, or None
        when the job grants no write anywhere."""
        if self.write_capable_steps == 0:
            return None
        return 1.0 - (self.write_needing_steps / self.write_capable_steps)


@dataclass
class CorpusReport:
    workflow_count: int = 0
    job_count: int = 0
    parse_failures: list[tuple[str, str]] = field(default_factory=list)
    analyses: list[JobAnalysis] = field(default_factory=list)

    def by_classification(self) -> dict[str, int]:
        counts = {CLASS_IGNORED: 0, CLASS_SINGLE: 0, CLASS_MULTI: 0}
        for analysis in self.analyses:
            counts[analysis.classification] += 1
        return counts

    @property
    def overprivileged_count(self) -> int:
        return sum(1 for a in self.analyses if a.overprivileged)

    @property
    def overprivileged_fraction(self) -> float | None:
        multi = self.by_classification()[CLASS_MULTI]
        if multi == 0:
            return None
        return self.overprivileged_count / multi

    @property
    def unspecified_default_count(self) -> int:
        return sum(1 for a in self.analyses if a.granted_source == "default")

    def severity_histogram(self) -> dict[Severity, int]:
        histogram = {
            severity: 0
            for severity in Severity
            if severity is not Severity.NOT_APPLICABLE
        }
        for analysis in self.analyses:
            for entry in analysis.overprivileged_scopes:
                histogram[entry.severity] += 1
        return histogram


def _resolve_grant(
    workflow: Workflow, job: Job, default_permissions: PermissionSet
) -> tuple[PermissionSet, str]:
    if job.permissions is not None:
        return job.permissions, "job"
    if workflow.permissions is not None:
        return workflow.permissions, "workflow"
    return default_permissions, "default"


def analyze_job(
    workflow: Workflow,
    job: Job,
    kb: KnowledgeBase,
    *,
    default_permissions: PermissionSet = PERMISSIVE_DEFAULT,
) -> JobAnalysis:
    """Classify one job and measure its permission overhang.

    Only action steps with a knowledge-base entry are covered; shell
    steps and reusable-workflow calls contribute nothing and jobs with
    at most one covered step cannot be overprivileged by construction:
    the least sufficient job grant is exactly that step's requirement.
    """
    covered = []
    for index, step in enumerate(job.steps):
        if not step.is_action or step.calls_reusable_workflow:
            continue
        policy = kb.lookup(str(step.action))
        if policy is None:
            continue
        covered.append(StepCoverage(index, policy.action_id, policy.permissions))

    if len(covered) == 0:
        classification = CLASS_IGNORED
    elif len(covered) == 1:
        classification = CLASS_SINGLE
    else:
        classification = CLASS_MULTI

    job_required = EMPTY_PERMISSIONS
    for entry in covered:
        job_required = job_required.union(entry.required)

    granted, granted_source = _resolve_grant(workflow, job, default_permissions)

    overprivileged_scopes = []
    if classification == CLASS_MULTI:
        for scope in SCOPE_ORDER:
            union_level = job_required.level_for(scope)
            if union_level is AccessLevel.NONE:
                continue
            if any(
                entry.required.level_for(scope) < union_level for entry in covered
            ):
                overprivileged_scopes.append(
                    OverprivilegedScope(
                        scope, union_level, severity_of(scope, union_level)
                    )
                )

    return JobAnalysis(
        workflow_source=workflow.source,
        workflow_name=workflow.name,
        job_id=job.id,
        classification=classification,
        total_steps=len(job.steps),
        covered=tuple(covered),
        job_required=job_required,
        granted=granted,
        granted_source=granted_source,
        overprivileged=bool(overprivileged_scopes),
        overprivileged_scopes=tuple(overprivileged_scopes),
    )


def analyze_workflow(
    workflow: Workflow,
    kb: KnowledgeBase,
    *,
    default_permissions: PermissionSet = PERMISSIVE_DEFAULT,
) -> list[JobAnalysis]:
    return [
        analyze_job(workflow, job, kb, default_permissions=default_permissions)
        for job in workflow.jobs
    ]


def analyze_corpus(
    root: str | Path,
    kb: KnowledgeBase,
    *,
    default_permissions: PermissionSet = PERMISSIVE_DEFAULT,
) -> CorpusReport:
    """Walk a directory tree of workflow files and analyze every job.

    Files that fail to parse are collected, not fatal; one bad vendored
    workflow should not sink a whole corpus run.
    """
    report = CorpusReport()
    for path in iter_workflow_files(root):
        try:
            workflow = parse_workflow_file(path)
        except WorkflowParseError as exc:
            report.parse_failures.append((str(path), str(exc)))
            continue
        report.workflow_count += 1
        for job in workflow.jobs:
            report.job_count += 1
            report.analyses.append(
                analyze_job(workflow, job, kb, default_permissions=default_permissions)
            )
    return report


def attack_surface(analysis: JobAnalysis) -> AttackSurface:
    """Count write-capable steps under job-level and step-level models.

    With a job-level token every covered step holds the full job grant,
    so one write scope anywhere makes every covered step write-capable.
    Step-level enforcement leaves only the steps whose own requirement
    includes a write.
    """
    grant_has_write = bool(analysis.granted.scopes_at(AccessLevel.WRITE))
    write_capable = analysis.covered_count if grant_has_write else 0
    write_needing = sum(
        1
        for entry in analysis.covered
        if entry.required.scopes_at(AccessLevel.WRITE)
    )
    return AttackSurface(
        job=analysis,
        write_capable_steps=write_capable,
        write_needing_steps=write_needing,
    )


@dataclass(frozen=True)
class ScopeDelta:
    scope: PermissionScope
    declared: AccessLevel
    learned: AccessLevel


@dataclass(frozen=True)
class PolicyDiff:
    """How one action's declared policy differs from its learned one."""

    action_id: str
    excess: tuple[ScopeDelta, ...]
    missing: tuple[ScopeDelta, ...]
    only_in_declared: bool = False
    only_in_learned: bool = False

    @property
    def clean(self) -> bool:
        return not (self.excess or self.missing)

    def worst_excess_severity(self) -> Severity | None:
        worst = None
        order = [Severity.LOW, Severity.MEDIUM, Severity.HIGH, Severity.CRITICAL]
        for delta in self.excess:
            severity = severity_of(delta.scope, delta.declared)
            if worst is None or order.index(severity) > order.index(worst):
                worst = severity
        return worst


def diff_policies(declared: KnowledgeBase, learned: KnowledgeBase) -> list[PolicyDiff]:
    """Compare declared grants against observed needs, per action.

    ``excess`` lists scopes declared above what was ever observed: the
    trim candidates.  ``missing`` lists scopes observed above the
    declaration, which would break under enforcement of the declared
    policy.  Actions present on only one side are reported with the
    corresponding flag so callers can tell "never ran" from "matches".
    """
    diffs = []
    all_ids = sorted(set(declared.policies) | set(learned.policies))
    for action_id in all_ids:
        declared_policy = declared.policies.get(action_id)
        learned_policy = learned.policies.get(action_id)
        declared_set = (
            declared_policy.permissions if declared_policy else EMPTY_PERMISSIONS
        )
        learned_set = (
            learned_policy.permissions if learned_policy else EMPTY_PERMISSIONS
        )
        excess = []
        missing = []
        for scope in SCOPE_ORDER:
            have = declared_set.level_for(scope)
            need = learned_set.level_for(scope)
            if have > need:
                excess.append(ScopeDelta(scope, have, need))
            elif need > have:
                missing.append(ScopeDelta(scope, have, need))
        diffs.append(
            PolicyDiff(
                action_id=action_id,
                excess=tuple(excess),
                missing=tuple(missing),
                only_in_declared=learned_policy is None,
                only_in_learned=declared_policy is None,
            )
        )
    return diffs
