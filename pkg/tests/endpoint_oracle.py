"""Independent reference implementations for endpoint inference tests.

The linear-scan matcher below deliberately shares no code with the trie: it
re-states the precedence rule from scratch so that the two can check each
other.  FROZEN_SEED is a hand-checked copy of the bundled route map; if the
data file drifts, the comparison test fails rather than both sides moving
together.
"""

from __future__ import annotations

import random

FROZEN_SEED: list[tuple[str, str, str, str]] = [
    ("GET", "/repos/{owner}/{repo}/contents/{path}", "contents", "read"),
    ("PUT", "/repos/{owner}/{repo}/contents/{path}", "contents", "write"),
    ("DELETE", "/repos/{owner}/{repo}/contents/{path}", "contents", "write"),
    ("GET", "/repos/{owner}/{repo}/readme", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/tarball/{ref}", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/zipball/{ref}", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/commits", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/commits/{ref}", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/branches", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/git/ref/{ref}", "contents", "read"),
    ("POST", "/repos/{owner}/{repo}/git/refs", "contents", "write"),
    ("PATCH", "/repos/{owner}/{repo}/git/refs/{ref}", "contents", "write"),
    ("DELETE", "/repos/{owner}/{repo}/git/refs/{ref}", "contents", "write"),
    ("POST", "/repos/{owner}/{repo}/git/blobs", "contents", "write"),
    ("POST", "/repos/{owner}/{repo}/git/trees", "contents", "write"),
    ("POST", "/repos/{owner}/{repo}/git/commits", "contents", "write"),
    ("GET", "/repos/{owner}/{repo}/git/commits/{commit_sha}", "contents", "read"),
    ("POST", "/repos/{owner}/{repo}/git/tags", "contents", "write"),
    ("POST", "/repos/{owner}/{repo}/merges", "contents", "write"),
    ("GET", "/repos/{owner}/{repo}/releases", "contents", "read"),
    ("POST", "/repos/{owner}/{repo}/releases", "contents", "write"),
    ("GET", "/repos/{owner}/{repo}/releases/latest", "contents", "read"),
    ("GET", "/repos/{owner}/{repo}/releases/{release_id}", "contents", "read"),
    ("PATCH", "/repos/{owner}/{repo}/releases/{release_id}", "contents", "write"),
    ("DELETE", "/repos/{owner}/{repo}/releases/{release_id}", "contents", "write"),
    ("GET", "/repos/{owner}/{repo}/deployments", "deployments", "read"),
    ("POST", "/repos/{owner}/{repo}/deployments", "deployments", "write"),
    ("GET", "/repos/{owner}/{repo}/deployments/{deployment_id}/statuses", "deployments", "read"),
    ("POST", "/repos/{owner}/{repo}/deployments/{deployment_id}/statuses", "deployments", "write"),
    ("GET", "/user/packages/{package_type}/{package_name}", "packages", "read"),
    ("DELETE", "/user/packages/{package_type}/{package_name}", "packages", "write"),
    ("GET", "/orgs/{org}/packages", "packages", "read"),
    ("GET", "/orgs/{org}/packages/{package_type}/{package_name}", "packages", "read"),
    ("DELETE", "/orgs/{org}/packages/{package_type}/{package_name}", "packages", "write"),
    ("GET", "/repos/{owner}/{repo}/pulls", "pull-requests", "read"),
    ("POST", "/repos/{owner}/{repo}/pulls", "pull-requests", "write"),
    ("GET", "/repos/{owner}/{repo}/pulls/{pull_number}", "pull-requests", "read"),
    ("PATCH", "/repos/{owner}/{repo}/pulls/{pull_number}", "pull-requests", "write"),
    ("GET", "/repos/{owner}/{repo}/pulls/{pull_number}/files", "pull-requests", "read"),
    ("PUT", "/repos/{owner}/{repo}/pulls/{pull_number}/merge", "pull-requests", "write"),
    ("GET", "/repos/{owner}/{repo}/pulls/{pull_number}/reviews", "pull-requests", "read"),
    ("POST", "/repos/{owner}/{repo}/pulls/{pull_number}/reviews", "pull-requests", "write"),
    ("POST", "/repos/{owner}/{repo}/pulls/{pull_number}/requested_reviewers", "pull-requests", "write"),
    ("GET", "/repos/{owner}/{repo}/code-scanning/alerts", "security-events", "read"),
    ("PATCH", "/repos/{owner}/{repo}/code-scanning/alerts/{alert_number}", "security-events", "write"),
    ("POST", "/repos/{owner}/{repo}/code-scanning/sarifs", "security-events", "write"),
    ("GET", "/repos/{owner}/{repo}/secret-scanning/alerts", "security-events", "read"),
    ("PATCH", "/repos/{owner}/{repo}/secret-scanning/alerts/{alert_number}", "security-events", "write"),
    ("GET", "/repos/{owner}/{repo}/actions/workflows", "actions", "read"),
    ("GET", "/repos/{owner}/{repo}/actions/runs", "actions", "read"),
    ("GET", "/repos/{owner}/{repo}/actions/runs/{run_id}", "actions", "read"),
    ("DELETE", "/repos/{owner}/{repo}/actions/runs/{run_id}", "actions", "write"),
    ("POST", "/repos/{owner}/{repo}/actions/workflows/{workflow_id}/dispatches", "actions", "write"),
    ("POST", "/repos/{owner}/{repo}/actions/runs/{run_id}/cancel", "actions", "write"),
    ("POST", "/repos/{owner}/{repo}/actions/runs/{run_id}/rerun", "actions", "write"),
    ("GET", "/repos/{owner}/{repo}/actions/artifacts", "actions", "read"),
    ("POST", "/repos/{owner}/{repo}/check-runs", "checks", "write"),
    ("GET", "/repos/{owner}/{repo}/check-runs/{check_run_id}", "checks", "read"),
    ("PATCH", "/repos/{owner}/{repo}/check-runs/{check_run_id}", "checks", "write"),
    ("POST", "/repos/{owner}/{repo}/check-suites", "checks", "write"),
    ("GET", "/repos/{owner}/{repo}/commits/{ref}/check-runs", "checks", "read"),
    ("GET", "/repos/{owner}/{repo}/commits/{ref}/check-suites", "checks", "read"),
    ("POST", "/repos/{owner}/{repo}/statuses/{sha}", "statuses", "write"),
    ("GET", "/repos/{owner}/{repo}/commits/{ref}/statuses", "statuses", "read"),
    ("GET", "/repos/{owner}/{repo}/commits/{ref}/status", "statuses", "read"),
    ("GET", "/repos/{owner}/{repo}/issues", "issues", "read"),
    ("POST", "/repos/{owner}/{repo}/issues", "issues", "write"),
    ("GET", "/repos/{owner}/{repo}/issues/{issue_number}", "issues", "read"),
    ("PATCH", "/repos/{owner}/{repo}/issues/{issue_number}", "issues", "write"),
    ("GET", "/repos/{owner}/{repo}/issues/{issue_number}/comments", "issues", "read"),
    ("POST", "/repos/{owner}/{repo}/issues/{issue_number}/comments", "issues", "write"),
    ("POST", "/repos/{owner}/{repo}/issues/{issue_number}/labels", "issues", "write"),
    ("PUT", "/repos/{owner}/{repo}/issues/{issue_number}/lock", "issues", "write"),
    ("GET", "/repos/{owner}/{repo}/labels", "issues", "read"),
    ("POST", "/repos/{owner}/{repo}/labels", "issues", "write"),
    ("GET", "/repos/{owner}/{repo}/milestones", "issues", "read"),
    ("POST", "/repos/{owner}/{repo}/milestones", "issues", "write"),
    ("GET", "/repos/{owner}/{repo}/projects", "repository-projects", "read"),
    ("POST", "/repos/{owner}/{repo}/projects", "repository-projects", "write"),
    ("GET", "/projects/{project_id}", "repository-projects", "read"),
    ("PATCH", "/projects/{project_id}", "repository-projects", "write"),
    ("POST", "/projects/{project_id}/columns", "repository-projects", "write"),
    ("GET", "/projects/columns/{column_id}/cards", "repository-projects", "read"),
    ("POST", "/projects/columns/{column_id}/cards", "repository-projects", "write"),
    ("POST", "/repos/{owner}/{repo}/attestations", "attestations", "write"),
    ("GET", "/repos/{owner}/{repo}/attestations/{subject_digest}", "attestations", "read"),
    ("GET", "/users/{username}/attestations/{subject_digest}", "attestations", "read"),
    ("PUT", "/repos/{owner}/{repo}/actions/oidc/customization/sub", "id-token", "write"),
    ("GET", "/orgs/{org}/teams/{team_slug}/discussions", "discussions", "read"),
    ("POST", "/orgs/{org}/teams/{team_slug}/discussions", "discussions", "write"),
    ("GET", "/repos/{owner}/{repo}/pages", "pages", "read"),
    ("POST", "/repos/{owner}/{repo}/pages", "pages", "write"),
    ("GET", "/repos/{owner}/{repo}/pages/builds", "pages", "read"),
    ("POST", "/repos/{owner}/{repo}/pages/builds", "pages", "write"),
    ("POST", "/repos/{owner}/{repo}/pages/deployments", "pages", "write"),]


def _shape(pattern: str) -> tuple[str, ...]:
    return tuple(
        "{}" if (seg.startswith("{") and seg.endswith("}")) else seg
        for seg in pattern.split("/")
        if seg
    )


def _matches(shape: tuple[str, ...], segments: tuple[str, ...]) -> bool:
    if len(shape) != len(segments):
        return False
    return all(
        pat == "{}" or pat == seg for pat, seg in zip(shape, segments)
    )


def linear_scan(
    entries: list[tuple[str, str, str, str]],
    segments: tuple[str, ...],
    method: str,
) -> tuple[str, str] | None:
    """Reference route match: scan every entry, then apply precedence.

    Among entries whose pattern matches the path and whose method matches,
    the winner is the one that is literal at the earliest position where the
    candidates differ.  Encoding each shape as a placeholder bitmask makes
    that a plain lexicographic minimum (literal=0 sorts first).
    """
    candidates = []
    for entry_method, pattern, scope, level in entries:
        if entry_method != method:
            continue
        shape = _shape(pattern)
        if _matches(shape, segments):
            mask = tuple(1 if part == "{}" else 0 for part in shape)
            candidates.append((mask, scope, level))
    if not candidates:
        return None
    _, scope, level = min(candidates)
    return scope, level


# --- random descriptor generation -----------------------------------------

_FAMILY_WORDS = [
    "pulls", "issues", "contents", "deployments", "check-runs", "check-suites",
    "statuses", "packages", "code-scanning", "actions", "pages", "discussions",
    "attestations", "projects",
]
_NOISE_WORDS = [
    "collaborators", "forks", "stargazers", "topics", "hooks", "notifications",
    "subscription", "events", "timeline", "comments", "assignees", "latest",
    "builds", "alerts", "reviews", "files",
]
_METHODS = ["GET", "HEAD", "POST", "PUT", "PATCH", "DELETE"]


def _token(rng: random.Random) -> str:
    return "".join(rng.choice("abcdefghijklmnopqrstuvwxyz0123456789") for _ in range(rng.randint(1, 8)))


def random_path_and_method(
    rng: random.Random, seed_entries: list[tuple[str, str, str, str]]
) -> tuple[str, str]:
    """Mix of instantiated seed routes, mutations of them, family-shaped
    paths, and pure noise, so both stages and the miss case get exercised."""
    roll = rng.random()
    if roll < 0.4:
        # instantiate a seed pattern; sometimes vary the method
        method, pattern, _, _ = rng.choice(seed_entries)
        path = "/" + "/".join(
            _token(rng) if seg.startswith("{") else seg
            for seg in pattern.split("/")
            if seg
        )
        if rng.random() < 0.3:
            method = rng.choice(_METHODS)
        return path, method
    if roll < 0.6:
        # mutate a seed pattern: drop or append a segment
        _, pattern, _, _ = rng.choice(seed_entries)
        segments = [
            _token(rng) if seg.startswith("{") else seg
            for seg in pattern.split("/")
            if seg
        ]
        if rng.random() < 0.5 and len(segments) > 1:
            segments.pop(rng.randrange(len(segments)))
        else:
            segments.append(rng.choice(_NOISE_WORDS + [_token(rng)]))
        return "/" + "/".join(segments), rng.choice(_METHODS)
    if roll < 0.85:
        # family-shaped path with random words after the identifiers
        family = rng.choice(["repos", "orgs", "users", "projects", "user", "teams"])
        skip = {"repos": 2, "orgs": 1, "users": 1}.get(family, 1)
        segments = [family] + [_token(rng) for _ in range(skip)]
        for _ in range(rng.randint(0, 3)):
            segments.append(rng.choice(_FAMILY_WORDS + _NOISE_WORDS + [_token(rng)]))
        return "/" + "/".join(segments), rng.choice(_METHODS)
    # pure noise
    segments = [_token(rng) for _ in range(rng.randint(1, 5))]
    return "/" + "/".join(segments), rng.choice(_METHODS)
