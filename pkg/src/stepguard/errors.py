"""Shared exception hierarchy.

Every error raised on purpose by this package derives from StepguardError so
callers can catch one type at tool boundaries and still tell config mistakes
apart from malformed input files.
"""

from __future__ import annotations


class StepguardError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(StepguardError, ValueError):
    """Invalid scope, level, or permission combination."""


class WorkflowParseError(StepguardError):
    """Workflow document is not parseable YAML.

    Carries the source name plus line/column of the first problem when the
    underlying parser reports one.
    """

    def __init__(self, message: str, *, source: str = "<string>",
                 line: int | None = None, column: int | None = None) -> None:
        self.source = source
        self.line = line
        self.column = column
        where = source
        if line is not None:
            where = f"{source}:{line}"
            if column is not None:
                where = f"{source}:{line}:{column}"
        super().__init__(f"{where}: {message}")


class WorkflowValidationError(StepguardError, ValueError):
    """Workflow parsed as YAML but violates the workflow schema."""


class EndpointMapError(StepguardError, ValueError):
    """Endpoint map document is malformed or contains conflicting entries."""


class PolicyError(StepguardError, ValueError):
    """Policy document is malformed, mis-keyed, or contains invalid grants."""


class VerifierUnavailableError(StepguardError):
    """The verification service could not be reached or timed out."""


class ProxyConfigError(StepguardError, ValueError):
    """Enforcement proxy configuration is invalid."""
