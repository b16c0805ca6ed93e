"""Command line front end.

``analyze``, ``surface`` and ``diff`` are offline reporting commands;
``serve`` and ``proxy`` run the verification service and enforcement
proxy; ``gen-ca`` and ``fake-api`` support local setups and testing.
"""

from __future__ import annotations

import json
import signal
import sys
import threading
from pathlib import Path

import click

from . import __version__
from .analyzer import (
    CLASS_MULTI,
    PERMISSIVE_DEFAULT,
    analyze_corpus,
    attack_surface,
    diff_policies,
)
from .endpoints import DEFAULT_API_HOST, EndpointMap
from .errors import StepguardError
from .fakeapi import FakeApiServer
from .model import ALL_READ, EMPTY_PERMISSIONS, Severity, severity_of
from .policy import load_consolidated, load_knowledge
from .proxy import ProxyConfig, ProxyServer
from .service import VerifierService
from .tlsutil import LeafStore, write_ca
from .verifier import Mode

DEFAULTS = {
    "write": PERMISSIVE_DEFAULT,
    "read": ALL_READ,
    "none": EMPTY_PERMISSIONS,
}


def _load_kb(knowledge: str | None, consolidated: str | None, lenient: bool):
    if (knowledge is None) == (consolidated is None):
        raise click.UsageError("provide exactly one of --knowledge/--consolidated")
    if knowledge is not None:
        return load_knowledge(knowledge, lenient=lenient)
    return load_consolidated(consolidated, lenient=lenient)


def _wait_for_interrupt() -> None:
    done = threading.Event()

    def _stop(signum, frame) -> None:
        done.set()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    done.wait()


@click.group()
@click.version_option(version=__version__, prog_name="stepguard")
def main() -> None:
    """Step-level permission analysis and enforcement for CI workflows."""


@main.command()
@click.option("--workflows", required=True, type=click.Path(exists=True), help="Directory of workflow YAML files.")
@click.option("--knowledge", type=click.Path(exists=True), help="Directory of per-action policy files.")
@click.option("--consolidated", type=click.Path(exists=True), help="Single declared knowledge-base file.")
@click.option("--default-permissions", "default_perms", type=click.Choice(sorted(DEFAULTS)), default="write", show_default=True, help="Grant modeled for jobs with no permissions block.")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table", show_default=True)
@click.option("--lenient", is_flag=True, help="Accept hand-written policy files with bare levels or trailing commas.")
def analyze(workflows, knowledge, consolidated, default_perms, fmt, lenient):
    """Classify jobs and report permission overhang.

    Exits 2 when any job holds a Critical-severity excess grant.
    """
    kb = _load_kb(knowledge, consolidated, lenient)
    report = analyze_corpus(
        workflows, kb, default_permissions=DEFAULTS[default_perms]
    )
    histogram = report.severity_histogram()
    if fmt == "json":
        click.echo(json.dumps(_report_dict(report), indent=2))
    else:
        classes = report.by_classification()
        click.echo(f"workflows analyzed: {report.workflow_count}")
        click.echo(f"jobs: {report.job_count}  " + "  ".join(f"{k}: {v}" for k, v in classes.items()))
        fraction = report.overprivileged_fraction
        pct = f" ({fraction:.1%} of multi-step)" if fraction is not None else ""
        click.echo(f"overprivileged jobs: {report.overprivileged_count}{pct}")
        click.echo(
            "excess grant severities: "
            + "  ".join(f"{severity}: {count}" for severity, count in histogram.items())
        )
        click.echo(f"jobs running on the default token: {report.unspecified_default_count}")
        if report.parse_failures:
            click.echo(f"parse failures: {len(report.parse_failures)}")
            for path, error in report.parse_failures:
                click.echo(f"  {path}: {error}", err=True)
        flagged = [a for a in report.analyses if a.overprivileged]
        if flagged:
            click.echo("")
            for analysis in flagged:
                scopes = ", ".join(
                    f"{o.scope.value}:{o.level}({o.severity})"
                    for o in analysis.overprivileged_scopes
                )
                name = Path(analysis.workflow_source).name
                click.echo(f"  {name}:{analysis.job_id}  {scopes}")
    if histogram.get(Severity.CRITICAL, 0) > 0:
        sys.exit(2)


def _report_dict(report) -> dict:
    return {
        "workflows": report.workflow_count,
        "jobs": report.job_count,
        "classification": report.by_classification(),
        "overprivileged": report.overprivileged_count,
        "overprivileged_fraction": report.overprivileged_fraction,
        "severities": {str(k): v for k, v in report.severity_histogram().items()},
        "default_token_jobs": report.unspecified_default_count,
        "parse_failures": [
            {"path": path, "error": error} for path, error in report.parse_failures
        ],
        "job_reports": [
            {
                "workflow": analysis.workflow_source,
                "job": analysis.job_id,
                "classification": analysis.classification,
                "covered_steps": analysis.covered_count,
                "required": analysis.job_required.to_sparse(),
                "granted": analysis.granted.to_sparse(),
                "granted_source": analysis.granted_source,
                "overprivileged": analysis.overprivileged,
                "overprivileged_scopes": [
                    {
                        "scope": o.scope.value,
                        "level": str(o.level),
                        "severity": str(o.severity),
                    }
                    for o in analysis.overprivileged_scopes
                ],
            }
            for analysis in report.analyses
        ],
    }


@main.command()
@click.option("--workflows", required=True, type=click.Path(exists=True))
@click.option("--knowledge", type=click.Path(exists=True))
@click.option("--consolidated", type=click.Path(exists=True))
@click.option("--default-permissions", "default_perms", type=click.Choice(sorted(DEFAULTS)), default="write", show_default=True)
@click.option("--lenient", is_flag=True)
def surface(workflows, knowledge, consolidated, default_perms, lenient):
    """Show how much write-capable surface step enforcement removes."""
    kb = _load_kb(knowledge, consolidated, lenient)
    report = analyze_corpus(
        workflows, kb, default_permissions=DEFAULTS[default_perms]
    )
    total_capable = 0
    total_needing = 0
    for analysis in report.analyses:
        if analysis.classification != CLASS_MULTI:
            continue
        surf = attack_surface(analysis)
        if surf.write_capable_steps == 0:
            continue
        total_capable += surf.write_capable_steps
        total_needing += surf.write_needing_steps
        name = Path(analysis.workflow_source).name
        click.echo(
            f"  {name}:{analysis.job_id}  "
            f"write-capable {surf.write_capable_steps} -> needing {surf.write_needing_steps}"
            f"  (reduction {surf.reduction:.1%})"
        )
    if total_capable == 0:
        click.echo("no write-capable steps in any multi-step job")
        return
    click.echo(
        f"total: {total_capable} write-capable steps under job tokens, "
        f"{total_needing} actually need write "
        f"(reduction {1 - total_needing / total_capable:.1%})"
    )


@main.command()
@click.option("--declared", required=True, type=click.Path(exists=True), help="Consolidated declared knowledge base.")
@click.option("--learned", required=True, type=click.Path(exists=True), help="Directory of learned per-action policies.")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table", show_default=True)
@click.option("--lenient", is_flag=True)
def diff(declared, learned, fmt, lenient):
    """Compare declared grants with learned needs.  Exits 1 on drift."""
    declared_kb = load_consolidated(declared, lenient=lenient)
    learned_kb = load_knowledge(learned, lenient=lenient)
    diffs = diff_policies(declared_kb, learned_kb)
    dirty = [d for d in diffs if not d.clean or d.only_in_declared or d.only_in_learned]
    if fmt == "json":
        click.echo(json.dumps([_diff_dict(d) for d in diffs], indent=2))
    else:
        if not dirty:
            click.echo("declared policies match learned needs")
        for entry in dirty:
            notes = []
            for delta in entry.excess:
                severity = severity_of(delta.scope, delta.declared)
                notes.append(
                    f"excess {delta.scope.value}: {delta.declared} -> {delta.learned} ({severity})"
                )
            for delta in entry.missing:
                notes.append(
                    f"missing {delta.scope.value}: declared {delta.declared}, observed {delta.learned}"
                )
            if entry.only_in_declared:
                notes.append("declared only (never observed)")
            if entry.only_in_learned:
                notes.append("learned only (no declaration)")
            click.echo(f"  {entry.action_id}  " + "; ".join(notes))
    if dirty:
        sys.exit(1)


def _diff_dict(entry) -> dict:
    return {
        "action": entry.action_id,
        "excess": [
            {
                "scope": d.scope.value,
                "declared": str(d.declared),
                "learned": str(d.learned),
            }
            for d in entry.excess
        ],
        "missing": [
            {
                "scope": d.scope.value,
                "declared": str(d.declared),
                "learned": str(d.learned),
            }
            for d in entry.missing
        ],
        "only_in_declared": entry.only_in_declared,
        "only_in_learned": entry.only_in_learned,
    }


@main.command()
@click.option("--knowledge", type=click.Path(exists=True))
@click.option("--consolidated", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["enforce", "learn"]), default="enforce", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=0, show_default="ephemeral", type=int)
@click.option("--api-host", default=DEFAULT_API_HOST, show_default=True)
@click.option("--endpoint-map", "endpoint_map_path", type=click.Path(exists=True), help="Override the bundled endpoint map.")
@click.option("--allow-unknown", is_flag=True, help="Allow requests whose endpoint cannot be mapped (visible in audit).")
@click.option("--audit", type=click.Path(), help="Append one JSON line per decision to this file.")
@click.option("--learn-out", type=click.Path(), help="Write learned per-action policies here on shutdown.")
@click.option("--lenient", is_flag=True)
def serve(knowledge, consolidated, mode, host, port, api_host, endpoint_map_path, allow_unknown, audit, learn_out, lenient):
    """Run the verification service until interrupted."""
    kb = _load_kb(knowledge, consolidated, lenient)
    if endpoint_map_path:
        endpoint_map = EndpointMap.load_file(endpoint_map_path, api_host=api_host)
    else:
        endpoint_map = EndpointMap.bundled(api_host=api_host)
    service = VerifierService(
        kb,
        endpoint_map,
        Mode.parse(mode),
        host=host,
        port=port,
        allow_unknown=allow_unknown,
        knowledge_dir=learn_out,
        audit_path=audit,
    )
    service.start()
    click.echo(f"verifier listening on {service.url}", err=False)
    sys.stdout.flush()
    try:
        _wait_for_interrupt()
    finally:
        service.stop()


@main.command()
@click.option("--listen", default="127.0.0.1:0", show_default=True, help="host:port to listen on.")
@click.option("--api-host", "api_hosts", multiple=True, default=(DEFAULT_API_HOST,), show_default=True, help="Hostname to intercept; repeatable.")
@click.option("--verifier", required=True, help="Verification service base URL.")
@click.option("--mode", type=click.Choice(["enforce", "learn"]), default="enforce", show_default=True)
@click.option("--action-id", help="Attribute every flow to this step.")
@click.option("--upstream", help="Send intercepted API traffic here instead of the live host.")
@click.option("--upstream-ca", type=click.Path(exists=True), help="CA bundle for an https upstream.")
@click.option("--ca-cert", type=click.Path(exists=True), help="Issuing CA certificate for HTTPS interception.")
@click.option("--ca-key", type=click.Path(exists=True), help="Issuing CA private key.")
@click.option("--flow-log", type=click.Path(), help="Append one JSON line per gated flow.")
@click.option("--no-health-check", is_flag=True, help="Skip the startup verifier health probe.")
def proxy(listen, api_hosts, verifier, mode, action_id, upstream, upstream_ca, ca_cert, ca_key, flow_log, no_health_check):
    """Run the enforcement proxy until interrupted."""
    host, _, port_text = listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.UsageError("--listen must look like host:port")
    if (ca_cert is None) != (ca_key is None):
        raise click.UsageError("--ca-cert and --ca-key go together")
    leaf_store = LeafStore.from_files(ca_cert, ca_key) if ca_cert else None
    config = ProxyConfig(
        verifier_url=verifier,
        api_hosts=frozenset(api_hosts),
        listen_host=host,
        listen_port=int(port_text),
        mode=Mode.parse(mode),
        action_id=action_id,
        upstream=upstream,
        upstream_ca=upstream_ca,
        leaf_store=leaf_store,
        flow_log_path=flow_log,
        health_check=not no_health_check,
    )
    server = ProxyServer(config)
    server.start()
    click.echo(f"proxy listening on {config.listen_host}:{server.port}")
    sys.stdout.flush()
    try:
        _wait_for_interrupt()
    finally:
        server.stop()
        if leaf_store is not None:
            leaf_store.close()


@main.command("gen-ca")
@click.option("--out", required=True, type=click.Path(), help="Directory for ca-cert.pem / ca-key.pem.")
@click.option("--common-name", default="Stepguard Interception CA", show_default=True)
def gen_ca(out, common_name):
    """Create an interception CA for the proxy."""
    cert_path, key_path = write_ca(out, common_name=common_name)
    click.echo(f"wrote {cert_path} and {key_path}")


@main.command("fake-api")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=0, show_default="ephemeral", type=int)
def fake_api(host, port):
    """Run a deterministic echo server for local testing."""
    server = FakeApiServer(host=host, port=port)
    server.start()
    click.echo(f"fake api listening on {server.address[0]}:{server.port}")
    sys.stdout.flush()
    try:
        _wait_for_interrupt()
    finally:
        server.stop()


def run() -> None:
    try:
        main(standalone_mode=True)
    except StepguardError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run()
