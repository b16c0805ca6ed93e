"""Generate the committed analysis corpus.

Produces corpus/workflows (30 files, 120 jobs), corpus/knowledge (one
learned policy file per catalog action), and corpus/static_kb.json (a
declared knowledge base with deliberate drift for diff demos).  Output
is deterministic: a fixed RNG seed drives every choice, so re-running
the script reproduces the committed artifacts byte for byte.

Usage: python3 tools/gen_corpus.py [dest-root]
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import yaml

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from stepguard.model import PermissionSet
from stepguard.policy import StepPolicy, canonical_action_id, save_policy

SEED = 20260823

# Per-action requirements the "learned" knowledge base will contain.
# Grants span every scope so severity reporting has full coverage.
CATALOG: dict[str, dict[str, str]] = {
    "actions/checkout": {"contents": "read"},
    "tj-actions/changed-files": {"pull-requests": "read"},
    "davidanson/markdownlint-cli2-action": {"pull-requests": "write"},
    "actions/setup-node": {},
    "actions/cache": {},
    "actions/upload-artifact": {},
    "actions/download-artifact": {},
    "octo/pr-comment": {"pull-requests": "write"},
    "octo/repo-metadata": {"contents": "read"},
    "octo/release-drafter": {"contents": "write", "pull-requests": "read"},
    "octo/deploy-pages": {"pages": "write", "id-token": "write"},
    "octo/deployment-gate": {"deployments": "write"},
    "octo/package-publish": {"packages": "write"},
    "octo/sarif-upload": {"security-events": "write"},
    "octo/test-reporter": {"checks": "write"},
    "octo/commit-status": {"statuses": "write"},
    "octo/issue-labeler": {"issues": "write"},
    "octo/project-sync": {"repository-projects": "write"},
    "octo/provenance-attest": {"attestations": "write", "id-token": "write"},
    "octo/discussion-bot": {"discussions": "write"},
    "octo/cache-sweeper": {"actions": "write"},
}

VERSIONS = ["v1", "v2", "v3", "v4", "v5", "main"]

UNCOVERED = [
    "example/unknown-action@v1",
    "someorg/custom-step@v2",
    "./.github/actions/local-build",
]

REUSABLE = [
    "octo/shared/.github/workflows/ci.yml@main",
    "octo/shared/.github/workflows/release.yaml@v2",
]

RUN_COMMANDS = [
    "make build",
    "make test",
    "npm ci",
    "npm run lint",
    "pytest -q",
    "./scripts/package.sh",
    "echo done",
]

PERMISSION_PRESETS = [
    {"contents": "read"},
    {"contents": "read", "pull-requests": "write"},
    {"contents": "write"},
    {"contents": "read", "issues": "write"},
    {"id-token": "write", "pages": "write"},
    {"contents": "read", "packages": "write"},
    {"contents": "read", "checks": "write", "statuses": "write"},
]

TRIGGER_PRESETS = [
    ["push"],
    ["pull_request"],
    ["push", "pull_request"],
    ["workflow_dispatch"],
    ["push", "workflow_dispatch"],
    ["release"],
]

JOB_ID_POOL = [
    "build", "test", "lint", "deploy", "publish", "scan", "docs",
    "release", "verify", "package", "integration", "nightly", "preview",
]

# The motivating workflow: three covered steps sharing one job token.
# Even the least sufficient job grant hands the checkout and diff steps
# a pull-request write they never use.
LISTING_WORKFLOW = """\
name: Lint documentation
on: pull_request

jobs:
  markdownlint:
    runs-on: ubuntu-latest
    permissions:
      contents: read
      pull-requests: write
    steps:
      - uses: actions/checkout@v5
      - name: Collect changed files
        uses: tj-actions/changed-files@v47
        with:
          files: '**/*.md'
      - name: Lint changed markdown
        uses: davidanson/markdownlint-cli2-action@v20
        with:
          globs: '**/*.md'

  build:
    runs-on: ubuntu-latest
    steps:
      - uses: actions/checkout@v5
      - run: make build

  test:
    runs-on: ubuntu-latest
    needs: [build]
    steps:
      - uses: actions/checkout@v5
      - run: make test
"""

# Six covered steps, one of which needs a write: the canonical
# attack-surface demo (reduction 1 - 1/6).
SURFACE_WORKFLOW = """\
name: Docs surface demo
on: [push, pull_request]

jobs:
  docs-refresh:
    runs-on: ubuntu-latest
    permissions:
      contents: read
      pull-requests: write
    steps:
      - uses: actions/checkout@v5
      - uses: actions/setup-node@v4
        with:
          node-version: '20'
      - uses: actions/cache@v4
        with:
          path: node_modules
          key: npm-cache
      - uses: tj-actions/changed-files@v47
      - uses: actions/upload-artifact@v4
        with:
          name: docs
          path: build/docs
      - uses: octo/pr-comment@v2

  build:
    runs-on: ubuntu-latest
    steps:
      - uses: actions/checkout@v5
      - run: make build
"""


def job_sizes(rng: random.Random, files: int, total_jobs: int) -> list[int]:
    sizes = [rng.randint(2, 6) for _ in range(files)]
    index = 0
    while sum(sizes) != total_jobs:
        if sum(sizes) < total_jobs and sizes[index % files] < 8:
            sizes[index % files] += 1
        elif sum(sizes) > total_jobs and sizes[index % files] > 1:
            sizes[index % files] -= 1
        index += 1
    return sizes


def make_step(rng: random.Random, covered_actions: list[str]) -> dict:
    roll = rng.random()
    if roll < 0.55:
        action = rng.choice(covered_actions)
        step: dict = {"uses": f"{action}@{rng.choice(VERSIONS)}"}
        if action == "actions/checkout" and rng.random() < 0.3:
            step["with"] = {"fetch-depth": 0}
        elif action == "actions/setup-node" and rng.random() < 0.5:
            step["with"] = {"node-version": "20"}
        return step
    if roll < 0.65:
        return {"uses": rng.choice(UNCOVERED)}
    if roll < 0.70:
        return {"uses": rng.choice(REUSABLE)}
    return {"run": rng.choice(RUN_COMMANDS)}


def make_job(rng: random.Random) -> dict:
    covered_actions = list(CATALOG)
    steps = []
    count = rng.randint(1, 7)
    if rng.random() < 0.7:
        step: dict = {"uses": f"actions/checkout@{rng.choice(['v4', 'v5'])}"}
        steps.append(step)
        count -= 1
    for _ in range(max(count, 0)):
        steps.append(make_step(rng, covered_actions))
    if not steps:
        steps.append({"run": rng.choice(RUN_COMMANDS)})
    job: dict = {"runs-on": "ubuntu-latest"}
    if rng.random() < 0.25:
        job["permissions"] = dict(rng.choice(PERMISSION_PRESETS))
    job["steps"] = steps
    return job


def make_workflow(rng: random.Random, index: int, jobs: int) -> dict:
    doc: dict = {"name": f"Pipeline {index:02d}"}
    doc["on"] = rng.choice(TRIGGER_PRESETS)
    if rng.random() < 0.2:
        doc["permissions"] = dict(rng.choice(PERMISSION_PRESETS))
    ids = rng.sample(JOB_ID_POOL, jobs)
    doc["jobs"] = {job_id: make_job(rng) for job_id in ids}
    return doc


def write_corpus(root: Path) -> None:
    rng = random.Random(SEED)
    workflows_dir = root / "workflows"
    knowledge_dir = root / "knowledge"
    workflows_dir.mkdir(parents=True, exist_ok=True)
    knowledge_dir.mkdir(parents=True, exist_ok=True)

    (workflows_dir / "lint-docs.yml").write_text(LISTING_WORKFLOW, encoding="utf-8")
    (workflows_dir / "surface-demo.yml").write_text(
        SURFACE_WORKFLOW, encoding="utf-8"
    )

    sizes = job_sizes(rng, files=28, total_jobs=115)
    for index, jobs in enumerate(sizes, start=3):
        doc = make_workflow(rng, index, jobs)
        text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
        (workflows_dir / f"pipeline-{index:02d}.yml").write_text(
            text, encoding="utf-8"
        )

    for action, grants in CATALOG.items():
        cid = canonical_action_id(action)
        save_policy(knowledge_dir, StepPolicy(cid, PermissionSet.from_mapping(grants)))

    declared = {
        # write where only read was ever seen: the critical trim case
        "actions/checkout": {"contents": "write"},
        "tj-actions/changed-files": {"pull-requests": "read"},
        "davidanson/markdownlint-cli2-action": {"pull-requests": "write"},
        "actions/setup-node": {},
        # extra issues grant nothing was observed to use
        "octo/pr-comment": {"pull-requests": "write", "issues": "write"},
        "octo/release-drafter": {"contents": "write", "pull-requests": "read"},
        # declared but never observed running
        "octo/legacy-notifier": {"issues": "write"},
    }
    (root / "static_kb.json").write_text(
        json.dumps(declared, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def main() -> None:
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("corpus")
    write_corpus(dest)
    workflow_files = sorted((dest / "workflows").glob("*.yml"))
    job_total = 0
    for path in workflow_files:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        job_total += len(doc["jobs"])
    print(f"{len(workflow_files)} workflow files, {job_total} jobs -> {dest}")


if __name__ == "__main__":
    main()
