"""Step-level least-privilege tooling for CI workflow API traffic.

The package covers the whole loop: parse workflows, infer the scope a REST
request needs, keep per-step policy knowledge, decide allow/deny, enforce at an
intercepting proxy, and report where job-level grants exceed what individual
steps need.
"""

from .analyzer import (
    PERMISSIVE_DEFAULT,
    AttackSurface,
    CorpusReport,
    JobAnalysis,
    PolicyDiff,
    analyze_corpus,
    analyze_job,
    analyze_workflow,
    attack_surface,
    diff_policies,
)
from .endpoints import EndpointMap, InferredPermission, RequestDescriptor
from .errors import (
    EndpointMapError,
    ModelError,
    PolicyError,
    ProxyConfigError,
    StepguardError,
    VerifierUnavailableError,
    WorkflowParseError,
    WorkflowValidationError,
)
from .model import (
    ALL_READ,
    ALL_WRITE,
    EMPTY_PERMISSIONS,
    SCOPE_ORDER,
    SEVERITY_TABLE,
    AccessLevel,
    PermissionScope,
    PermissionSet,
    Severity,
    level_allows,
    severity_of,
)
from .policy import (
    KnowledgeBase,
    Provenance,
    StepPolicy,
    canonical_action_id,
    load_consolidated,
    load_knowledge,
    save_knowledge,
    save_policy,
)
from .proxy import FlowRecord, ProxyConfig, ProxyServer, VerifierClient
from .service import VerifierService
from .tlsutil import LeafStore, generate_ca, issue_leaf, write_ca
from .verifier import (
    Decision,
    Mode,
    Observation,
    ObservationLog,
    Reason,
    derive_policies,
    verify,
)
from .workflow import (
    Job,
    Step,
    Workflow,
    effective_job_permissions,
    iter_workflow_files,
    parse_workflow,
    parse_workflow_file,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_READ",
    "ALL_WRITE",
    "EMPTY_PERMISSIONS",
    "PERMISSIVE_DEFAULT",
    "SCOPE_ORDER",
    "SEVERITY_TABLE",
    "AccessLevel",
    "AttackSurface",
    "CorpusReport",
    "Decision",
    "EndpointMap",
    "EndpointMapError",
    "FlowRecord",
    "InferredPermission",
    "Job",
    "JobAnalysis",
    "KnowledgeBase",
    "LeafStore",
    "Mode",
    "ModelError",
    "Observation",
    "ObservationLog",
    "PermissionScope",
    "PermissionSet",
    "PolicyDiff",
    "PolicyError",
    "Provenance",
    "ProxyConfig",
    "ProxyConfigError",
    "ProxyServer",
    "Reason",
    "RequestDescriptor",
    "Severity",
    "Step",
    "StepPolicy",
    "StepguardError",
    "VerifierClient",
    "VerifierService",
    "VerifierUnavailableError",
    "Workflow",
    "WorkflowParseError",
    "WorkflowValidationError",
    "analyze_corpus",
    "analyze_job",
    "analyze_workflow",
    "attack_surface",
    "canonical_action_id",
    "derive_policies",
    "diff_policies",
    "effective_job_permissions",
    "generate_ca",
    "issue_leaf",
    "iter_workflow_files",
    "level_allows",
    "load_consolidated",
    "load_knowledge",
    "parse_workflow",
    "parse_workflow_file",
    "save_knowledge",
    "save_policy",
    "severity_of",
    "verify",
    "write_ca",
]
