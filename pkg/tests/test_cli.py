"""CLI surface: reporting commands in-process, servers as subprocesses."""

import json
import signal
import socket
import subprocess
import sys
from pathlib import Path

import pytest
import requests as requests_lib
from click.testing import CliRunner

from stepguard.cli import main
from stepguard.endpoints import EndpointMap
from stepguard.fakeapi import FakeApiServer
from stepguard.model import PermissionSet
from stepguard.policy import (
    KnowledgeBase,
    Provenance,
    StepPolicy,
    canonical_action_id,
    save_policy,
)
from stepguard.service import VerifierService
from stepguard.verifier import Mode

TESTS_DIR = Path(__file__).resolve().parent
CORPUS = TESTS_DIR.parent / "corpus"


@pytest.fixture()
def runner():
    return CliRunner()


class TestAnalyzeCommand:
    def test_table_output_and_critical_exit(self, runner):
        result = runner.invoke(
            main,
            [
                "analyze",
                "--workflows", str(CORPUS / "workflows"),
                "--knowledge", str(CORPUS / "knowledge"),
            ],
        )
        assert result.exit_code == 2
        assert "workflows analyzed: 30" in result.output
        assert "jobs: 120" in result.output
        assert "lint-docs.yml:markdownlint" in result.output
        assert "pull-requests:write(High)" in result.output

    def test_json_output_matches_shape(self, runner):
        result = runner.invoke(
            main,
            [
                "analyze",
                "--workflows", str(CORPUS / "workflows"),
                "--knowledge", str(CORPUS / "knowledge"),
                "--format", "json",
            ],
        )
        doc = json.loads(result.output)
        assert doc["workflows"] == 30
        assert doc["jobs"] == 120
        assert doc["severities"]["Critical"] > 0
        assert len(doc["job_reports"]) == 120

    def test_exit_zero_without_critical_excess(self, runner, tmp_path):
        workflows = tmp_path / "workflows"
        workflows.mkdir()
        (workflows / "ci.yml").write_text(
            "on: push\n"
            "jobs:\n"
            "  mirror:\n"
            "    steps:\n"
            "      - uses: a/reader@v1\n"
            "      - uses: b/reader@v1\n",
            encoding="utf-8",
        )
        knowledge = tmp_path / "knowledge"
        knowledge.mkdir()
        for action in ("a/reader", "b/reader"):
            save_policy(
                knowledge,
                StepPolicy(
                    canonical_action_id(action),
                    PermissionSet.from_mapping({"contents": "read"}),
                ),
            )
        result = runner.invoke(
            main,
            ["analyze", "--workflows", str(workflows), "--knowledge", str(knowledge)],
        )
        assert result.exit_code == 0

    def test_requires_exactly_one_knowledge_source(self, runner):
        result = runner.invoke(
            main, ["analyze", "--workflows", str(CORPUS / "workflows")]
        )
        assert result.exit_code != 0
        assert "exactly one" in result.output


class TestDiffCommand:
    def test_drift_exits_one(self, runner):
        result = runner.invoke(
            main,
            [
                "diff",
                "--declared", str(CORPUS / "static_kb.json"),
                "--learned", str(CORPUS / "knowledge"),
            ],
        )
        assert result.exit_code == 1
        assert "excess contents: write -> read (Critical)" in result.output

    def test_clean_exits_zero(self, runner, tmp_path):
        declared = tmp_path / "declared.json"
        declared.write_text(json.dumps({"a/b": {"contents": "read"}}), encoding="utf-8")
        knowledge = tmp_path / "knowledge"
        knowledge.mkdir()
        save_policy(
            knowledge,
            StepPolicy("a/b", PermissionSet.from_mapping({"contents": "read"})),
        )
        result = runner.invoke(
            main,
            ["diff", "--declared", str(declared), "--learned", str(knowledge)],
        )
        assert result.exit_code == 0
        assert "match" in result.output


class TestSurfaceCommand:
    def test_reports_demo_job(self, runner):
        result = runner.invoke(
            main,
            [
                "surface",
                "--workflows", str(CORPUS / "workflows"),
                "--knowledge", str(CORPUS / "knowledge"),
            ],
        )
        assert result.exit_code == 0
        assert "docs-refresh" in result.output
        assert "write-capable 6 -> needing 1" in result.output
        assert "reduction 83.3%" in result.output


class TestGenCa:
    def test_writes_key_pair(self, runner, tmp_path):
        out = tmp_path / "ca"
        result = runner.invoke(main, ["gen-ca", "--out", str(out)])
        assert result.exit_code == 0
        cert = (out / "ca-cert.pem").read_text()
        key = (out / "ca-key.pem").read_text()
        assert "BEGIN CERTIFICATE" in cert
        assert "PRIVATE KEY" in key
        assert (out / "ca-key.pem").stat().st_mode & 0o077 == 0


def _drain(process):
    try:
        process.send_signal(signal.SIGINT)
        process.wait(timeout=10)
    except subprocess.TimeoutExpired:
        process.kill()
        process.wait(timeout=5)
    return process.returncode


class TestServerCommands:
    def test_serve_command_runs_and_answers(self, tmp_path):
        consolidated = tmp_path / "kb.json"
        consolidated.write_text(
            json.dumps({"octo/pr-reader": {"pull-requests": "read"}}),
            encoding="utf-8",
        )
        process = subprocess.Popen(
            [
                sys.executable, "-m", "stepguard", "serve",
                "--consolidated", str(consolidated),
                "--mode", "enforce",
                "--api-host", "api.test",
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        try:
            banner = process.stdout.readline()
            assert "verifier listening on " in banner
            url = banner.strip().rsplit(" ", 1)[1]
            health = requests_lib.get(f"{url}/v1/health", timeout=5)
            assert health.status_code == 200
            verdict = requests_lib.post(
                f"{url}/v1/verify",
                json={
                    "action_id": "octo/pr-reader@v2",
                    "method": "GET",
                    "url": "https://api.test/repos/o/r/pulls",
                },
                timeout=5,
            ).json()
            assert verdict["allow"] is True
            assert verdict["scope"] == "pull-requests"
        finally:
            code = _drain(process)
        assert code == 0

    def test_fake_api_command_runs(self):
        process = subprocess.Popen(
            [sys.executable, "-m", "stepguard", "fake-api"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        try:
            banner = process.stdout.readline()
            assert "fake api listening on " in banner
            address = banner.strip().rsplit(" ", 1)[1]
            reply = requests_lib.get(f"http://{address}/ping", timeout=5).json()
            assert reply == {"ok": True, "method": "GET", "path": "/ping"}
        finally:
            code = _drain(process)
        assert code == 0

    def test_proxy_command_gates_traffic(self):
        cid = canonical_action_id("octo/pr-reader@v2")
        kb = KnowledgeBase(
            policies={
                cid: StepPolicy(
                    cid, PermissionSet.from_mapping({"pull-requests": "read"})
                )
            },
            provenance=Provenance.STATIC_DECLARED,
        )
        endpoint_map = EndpointMap.bundled(api_host="api.test")
        with FakeApiServer() as fake:
            with VerifierService(kb, endpoint_map, Mode.ENFORCEMENT) as service:
                process = subprocess.Popen(
                    [
                        sys.executable, "-m", "stepguard", "proxy",
                        "--listen", "127.0.0.1:0",
                        "--api-host", "api.test",
                        "--verifier", service.url,
                        "--action-id", "octo/pr-reader@v2",
                        "--upstream", f"http://127.0.0.1:{fake.port}",
                    ],
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
                try:
                    banner = process.stdout.readline()
                    assert "proxy listening on " in banner
                    address = banner.strip().rsplit(" ", 1)[1]
                    host, _, port = address.rpartition(":")
                    with socket.create_connection((host, int(port)), timeout=5) as sock:
                        sock.sendall(
                            b"GET http://api.test/repos/o/r/pulls HTTP/1.1\r\n"
                            b"Host: api.test\r\nConnection: close\r\n\r\n"
                        )
                        blob = b""
                        while True:
                            data = sock.recv(65536)
                            if not data:
                                break
                            blob += data
                    assert blob.startswith(b"HTTP/1.1 200 OK")
                    assert b'"ok": true' in blob
                finally:
                    code = _drain(process)
                assert code == 0
        assert fake.hits("/repos/o/r/pulls") == 1
