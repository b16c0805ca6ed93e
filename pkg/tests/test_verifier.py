"""Verifier decision matrix, observation log, and wire protocol tests."""

from __future__ import annotations

import json
import random
import threading

import pytest
import requests

from stepguard.endpoints import EndpointMap, RequestDescriptor
from stepguard.model import AccessLevel, PermissionScope, PermissionSet
from stepguard.policy import KnowledgeBase, StepPolicy, load_knowledge
from stepguard.service import VerifierService
from stepguard.verifier import (
    Decision,
    Mode,
    ObservationLog,
    Reason,
    Verdict,
    derive_policies,
    verify,
)

from endpoint_oracle import FROZEN_SEED


@pytest.fixture(scope="module")
def emap() -> EndpointMap:
    return EndpointMap.bundled()


def kb_for(action_id: str, grants: dict[str, str]) -> KnowledgeBase:
    policy = StepPolicy(action_id, PermissionSet.from_mapping(grants))
    return KnowledgeBase(policies={action_id: policy})


def req(method: str, path: str, action: str = "tj-actions/changed-files",
        host: str = "api.github.com") -> RequestDescriptor:
    return RequestDescriptor(method=method, host=host, path=path, action_id=action)


class TestEnforcement:
    def test_sufficient_policy_allows(self, emap):
        kb = kb_for("tj-actions/changed-files", {"pull-requests": "read"})
        d = verify(req("GET", "/repos/o/r/pulls"), kb, emap, Mode.ENFORCEMENT)
        assert d.verdict is Verdict.ALLOW
        assert d.reason == Reason.POLICY_SATISFIED
        assert d.inferred.scope is PermissionScope.PULL_REQUESTS
        assert d.granted_level is AccessLevel.READ

    def test_write_grant_satisfies_read_need(self, emap):
        kb = kb_for("a/b", {"pull-requests": "write"})
        d = verify(req("GET", "/repos/o/r/pulls", action="a/b"), kb, emap, Mode.ENFORCEMENT)
        assert d.allow

    def test_insufficient_policy_denies(self, emap):
        kb = kb_for("tj-actions/changed-files", {"pull-requests": "read", "contents": "read"})
        d = verify(req("POST", "/repos/o/r/pulls/7/reviews"), kb, emap, Mode.ENFORCEMENT)
        assert d.verdict is Verdict.DENY
        assert d.reason == Reason.POLICY_INSUFFICIENT
        assert d.inferred.level is AccessLevel.WRITE
        assert d.granted_level is AccessLevel.READ

    def test_missing_policy_denies(self, emap):
        kb = KnowledgeBase()
        d = verify(req("GET", "/repos/o/r/pulls"), kb, emap, Mode.ENFORCEMENT)
        assert d.verdict is Verdict.DENY
        assert d.reason == Reason.NO_POLICY

    def test_unknown_endpoint_denies(self, emap):
        kb = kb_for("tj-actions/changed-files", {"contents": "write"})
        d = verify(req("GET", "/repos/o/r/collaborators"), kb, emap, Mode.ENFORCEMENT)
        assert d.verdict is Verdict.DENY
        assert d.reason == Reason.UNKNOWN_ENDPOINT

    def test_allow_unknown_relaxation_is_visible(self, emap):
        kb = KnowledgeBase()
        d = verify(
            req("GET", "/repos/o/r/collaborators"), kb, emap, Mode.ENFORCEMENT,
            allow_unknown=True,
        )
        assert d.verdict is Verdict.ALLOW
        assert d.reason == Reason.UNKNOWN_ENDPOINT  # warning stays in the record

    def test_non_api_host_passes_through(self, emap):
        kb = KnowledgeBase()
        d = verify(req("POST", "/anything", host="pypi.org"), kb, emap, Mode.ENFORCEMENT)
        assert d.allow
        assert d.reason == Reason.POLICY_SATISFIED
        assert d.inferred.kind == "not-api"

    def test_action_id_canonicalised_for_lookup(self, emap):
        kb = kb_for("tj-actions/changed-files", {"pull-requests": "read"})
        d = verify(
            req("GET", "/repos/o/r/pulls", action="TJ-Actions/Changed-Files@v47"),
            kb, emap, Mode.ENFORCEMENT,
        )
        assert d.allow
        assert d.action_id == "tj-actions/changed-files"

    def test_deny_reasons_closed_set(self, emap):
        kb = KnowledgeBase()
        for r in [req("GET", "/repos/o/r/pulls"), req("POST", "/weird")]:
            d = verify(r, kb, emap, Mode.ENFORCEMENT)
            if d.verdict is Verdict.DENY:
                assert d.reason in {
                    Reason.POLICY_INSUFFICIENT, Reason.NO_POLICY, Reason.UNKNOWN_ENDPOINT,
                }


class TestLearning:
    def test_everything_allowed_and_recorded(self, emap):
        log = ObservationLog()
        d = verify(req("POST", "/repos/o/r/pulls/7/reviews"), KnowledgeBase(), emap, Mode.LEARNING)
        assert d.allow
        assert d.reason == Reason.LEARNING_MODE_ALLOW
        log.record(d)
        obs = log.observations()
        assert len(obs) == 1
        assert obs[0].scope is PermissionScope.PULL_REQUESTS
        assert obs[0].level is AccessLevel.WRITE
        assert obs[0].count == 1

    def test_learning_never_denies(self, emap):
        for r in [req("GET", "/repos/o/r/pulls"), req("POST", "/nonsense"), req("POST", "/graphql")]:
            assert verify(r, KnowledgeBase(), emap, Mode.LEARNING).allow

    def test_learning_reason_only_in_learning(self, emap):
        d = verify(req("GET", "/repos/o/r/pulls"),
                   kb_for("tj-actions/changed-files", {"pull-requests": "read"}),
                   emap, Mode.ENFORCEMENT)
        assert d.reason != Reason.LEARNING_MODE_ALLOW

    def test_scripted_trace_counts(self, emap):
        # three distinct recognised requests and one unknown
        log = ObservationLog()
        trace = [
            req("GET", "/repos/o/r/pulls"),
            req("GET", "/repos/o/r/pulls/3/files"),
            req("POST", "/repos/o/r/issues"),
            req("GET", "/repos/o/r/collaborators"),
        ]
        for r in trace:
            log.record(verify(r, KnowledgeBase(), emap, Mode.LEARNING))
        assert len(log) == 3
        assert len(log.unknown_requests()) == 1
        assert log.unknown_requests()[0].path == "/repos/o/r/collaborators"

    def test_repeat_requests_increment_counts(self, emap):
        log = ObservationLog()
        for _ in range(3):
            log.record(verify(req("GET", "/repos/o/r/pulls"), KnowledgeBase(), emap, Mode.LEARNING))
        obs = log.observations()
        assert len(obs) == 1 and obs[0].count == 3

    def test_graphql_counted_distinctly(self, emap):
        log = ObservationLog()
        log.record(verify(req("POST", "/graphql"), KnowledgeBase(), emap, Mode.LEARNING))
        log.record(verify(req("GET", "/repos/o/r/collaborators"), KnowledgeBase(), emap, Mode.LEARNING))
        assert log.graphql_count == 1
        assert len(log.unknown_requests()) == 2

    def test_version_retained_on_observation(self, emap):
        log = ObservationLog()
        log.record(verify(req("GET", "/repos/o/r/pulls", action="a/b@v2"), KnowledgeBase(), emap, Mode.LEARNING))
        assert log.observations()[0].action_version == "v2"

    def test_non_api_not_recorded(self, emap):
        log = ObservationLog()
        log.record(verify(req("GET", "/x", host="example.com"), KnowledgeBase(), emap, Mode.LEARNING))
        assert len(log) == 0 and not log.unknown_requests()


class TestDerivePolicies:
    def test_union_per_action(self, emap):
        log = ObservationLog()
        trace = [
            req("GET", "/repos/o/r/pulls", action="a/lint"),
            req("POST", "/repos/o/r/pulls/1/reviews", action="a/lint"),
            req("GET", "/repos/o/r/readme", action="b/build"),
        ]
        for r in trace:
            log.record(verify(r, KnowledgeBase(), emap, Mode.LEARNING))
        derived = {p.action_id: p.permissions for p in derive_policies(log)}
        assert derived == {
            "a/lint": PermissionSet.from_mapping({"pull-requests": "write"}),
            "b/build": PermissionSet.from_mapping({"contents": "read"}),
        }

    def test_unknowns_never_learned(self, emap):
        log = ObservationLog()
        log.record(verify(req("POST", "/graphql", action="a/lint"), KnowledgeBase(), emap, Mode.LEARNING))
        assert derive_policies(log) == []

    def test_learn_then_enforce_round_trip(self, emap):
        rng = random.Random(11)
        known = [e for e in FROZEN_SEED]
        log = ObservationLog()
        trace = []
        for _ in range(40):
            method, pattern, _, _ = rng.choice(known)
            path = "/" + "/".join(
                f"t{rng.randrange(100)}" if seg.startswith("{") else seg
                for seg in pattern.split("/") if seg
            )
            r = req(method, path, action=rng.choice(["x/a", "x/b"]))
            trace.append(r)
            log.record(verify(r, KnowledgeBase(), emap, Mode.LEARNING))
        kb = KnowledgeBase(policies={p.action_id: p for p in derive_policies(log)})
        for r in trace:
            d = verify(r, kb, emap, Mode.ENFORCEMENT)
            assert d.allow, f"replay denied: {r.method} {r.path} ({d.reason})"


class TestObservationLogConcurrency:
    def test_parallel_records_sum(self, emap):
        log = ObservationLog()
        decision = verify(req("GET", "/repos/o/r/pulls"), KnowledgeBase(), emap, Mode.LEARNING)
        unknown = verify(req("GET", "/repos/o/r/collaborators"), KnowledgeBase(), emap, Mode.LEARNING)

        def worker():
            for _ in range(200):
                log.record(decision)
                log.record(unknown)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert log.observations()[0].count == 1600
        assert len(log.unknown_requests()) == 1600


class TestWireProtocol:
    @pytest.fixture()
    def enforcing(self, emap):
        kb = kb_for("tj-actions/changed-files", {"pull-requests": "read", "contents": "read"})
        with VerifierService(kb, emap, Mode.ENFORCEMENT) as service:
            yield service

    def test_allow_response_shape(self, enforcing):
        r = requests.post(f"{enforcing.url}/v1/verify", json={
            "action_id": "tj-actions/changed-files",
            "method": "GET",
            "url": "https://api.github.com/repos/octo/demo/pulls?state=open",
        }, timeout=5)
        assert r.status_code == 200
        body = r.json()
        assert body["allow"] is True
        assert body["reason"] == "policy-satisfied"
        assert body["scope"] == "pull-requests"
        assert body["level"] == "read"
        assert body["granted"] == "read"

    def test_deny_response_shape(self, enforcing):
        r = requests.post(f"{enforcing.url}/v1/verify", json={
            "action_id": "tj-actions/changed-files",
            "method": "POST",
            "url": "https://api.github.com/repos/octo/demo/pulls/7/reviews",
        }, timeout=5)
        body = r.json()
        assert body["allow"] is False
        assert body["reason"] == "policy-insufficient"
        assert body["scope"] == "pull-requests"
        assert body["level"] == "write"
        assert body["granted"] == "read"

    def test_health(self, enforcing):
        r = requests.get(f"{enforcing.url}/v1/health", timeout=5)
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_malformed_body_400_then_usable(self, enforcing):
        with requests.Session() as session:
            bad = session.post(
                f"{enforcing.url}/v1/verify", data=b"{not json",
                headers={"Content-Type": "application/json"}, timeout=5,
            )
            assert bad.status_code == 400
            assert "error" in bad.json()
            good = session.post(f"{enforcing.url}/v1/verify", json={
                "action_id": "tj-actions/changed-files",
                "method": "GET",
                "url": "https://api.github.com/repos/o/r/pulls",
            }, timeout=5)
            assert good.status_code == 200

    def test_missing_field_400(self, enforcing):
        r = requests.post(f"{enforcing.url}/v1/verify", json={"method": "GET"}, timeout=5)
        assert r.status_code == 400
        assert "action_id" in r.json()["error"]

    def test_hostless_url_400(self, enforcing):
        r = requests.post(f"{enforcing.url}/v1/verify", json={
            "action_id": "a", "method": "GET", "url": "/no/host",
        }, timeout=5)
        assert r.status_code == 400

    def test_request_count(self, enforcing):
        before = enforcing.request_count
        requests.post(f"{enforcing.url}/v1/verify", json={
            "action_id": "a", "method": "GET",
            "url": "https://api.github.com/repos/o/r/pulls",
        }, timeout=5)
        assert enforcing.request_count == before + 1

    def test_learning_flush_matches_derive(self, emap, tmp_path):
        knowledge_dir = tmp_path / "knowledge"
        audit = tmp_path / "audit.jsonl"
        service = VerifierService(
            KnowledgeBase(), emap, Mode.LEARNING,
            knowledge_dir=knowledge_dir, audit_path=audit,
        ).start()
        try:
            for method, url in [
                ("GET", "https://api.github.com/repos/o/r/pulls"),
                ("POST", "https://api.github.com/repos/o/r/issues"),
                ("POST", "https://api.github.com/graphql"),
            ]:
                r = requests.post(f"{service.url}/v1/verify", json={
                    "action_id": "demo/step@v1", "method": method, "url": url,
                }, timeout=5)
                assert r.json()["allow"] is True
            expected = {p.action_id: p.permissions for p in derive_policies(service.observations)}
        finally:
            service.stop()
        kb = load_knowledge(knowledge_dir)
        assert {p.action_id: p.permissions for p in kb} == expected
        assert kb.lookup("demo/step").permissions == PermissionSet.from_mapping({
            "pull-requests": "read", "issues": "write",
        })
        lines = [json.loads(line) for line in audit.read_text().splitlines()]
        assert len(lines) == 3
        assert {line["verdict"] for line in lines} == {"allow"}
        assert lines[0]["mode"] == "learn"
