from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillfence.errors import OracleUnavailable
from skillfence.oracle import (
    RemoteOracle,
    RuleOracle,
    TranscriptOracle,
    jaccard,
    make_oracle,
    request_hash,
)

LOCAL_MONITOR_PROFILE = {
    "name": "sys-monitor",
    "description": "Run local system diagnosis and report health locally.",
    "use_when": None,
    "headings": ["Steps"],
    "summary": "",
}

SYNC_PROFILE = {
    "name": "repo-assistant",
    "description": "Analyze repository commits and synchronize the report to the "
                   "configured Telegram recipient.",
    "use_when": None,
    "headings": [],
    "summary": "",
}


def test_classify_detached_send_is_candidate(rule_oracle):
    verdict = rule_oracle.classify_consistency(
        LOCAL_MONITOR_PROFILE,
        {"op": "send", "obj": "system_profile", "obj_phrase": "the system profile",
         "head_obj": "profile", "dest": "telegram", "layer": "instr"},
        "backward: collect(system_profile) | forward: - | guards: -",
    )
    assert verdict.verdict == "candidate"
    assert verdict.rationale
    assert 0.0 <= verdict.confidence <= 1.0


def test_classify_declared_send_is_related(rule_oracle):
    verdict = rule_oracle.classify_consistency(
        SYNC_PROFILE,
        {"op": "send", "obj": "report", "obj_phrase": "the report",
         "head_obj": "report", "dest": "endpoint", "layer": "instr"},
        "-",
    )
    assert verdict.verdict == "related"


def test_classify_core_function_is_related(rule_oracle):
    verdict = rule_oracle.classify_consistency(
        SYNC_PROFILE,
        {"op": "generate", "obj": "report", "obj_phrase": "the report",
         "head_obj": "report", "dest": None, "layer": "instr"},
        "-",
    )
    assert verdict.verdict == "related"


def test_prompt_for_summarize_chain_matches_repo_wording(rule_oracle):
    prompt = rule_oracle.synthesize_prompt(
        SYNC_PROFILE,
        [{"raw_verb": "Summarize", "op": "transform", "obj": "recent_commits",
          "obj_phrase": "recent commits", "head_obj": "commits", "dest": None,
          "dest_phrase": None}],
        [],
    )
    assert prompt == "Summarize recent commits in this repository."


def test_prompt_mentions_declared_send_destination(rule_oracle):
    prompt = rule_oracle.synthesize_prompt(
        SYNC_PROFILE,
        [
            {"raw_verb": "generate", "op": "generate", "obj": "report",
             "obj_phrase": "the report", "head_obj": "report", "dest": None,
             "dest_phrase": None},
            {"raw_verb": "send", "op": "send", "obj": "report",
             "obj_phrase": "the report", "head_obj": "report", "dest": "telegram",
             "dest_phrase": None},
        ],
        [],
    )
    tokens = set(prompt.lower().replace(",", " ").split())
    assert {"send", "report", "telegram"} <= {t.strip(".") for t in tokens}


def test_prompt_degenerate_chain(rule_oracle):
    assert (
        rule_oracle.synthesize_prompt(SYNC_PROFILE, [], [])
        == "Run the skill's default task."
    )


def test_core_eq_subtraction_true(rule_oracle):
    original = [["read", "records", "n1"], ["generate", "report", "n2"], ["send", "report", "n3"]]
    replay = [["read", "records", "m1"], ["generate", "report", "m2"]]
    assert rule_oracle.judge_core_eq(
        "task", original, replay, {"node": "n3", "op": "send", "obj": "report", "dependents": []}
    )


def test_core_eq_lost_step_false(rule_oracle):
    original = [["read", "records", "n1"], ["generate", "report", "n2"], ["send", "report", "n3"]]
    replay = [["read", "records", "m1"]]
    assert not rule_oracle.judge_core_eq(
        "task", original, replay, {"node": "n3", "op": "send", "obj": "report", "dependents": []}
    )


def test_core_eq_noop_ablation_true(rule_oracle):
    original = [["read", "records", "n1"]]
    assert rule_oracle.judge_core_eq(
        "task", original, original, {"node": "nX", "op": "send", "obj": "x", "dependents": []}
    )


def test_core_eq_unordered_mode(rule_oracle):
    original = [["read", "a", "n1"], ["read", "b", "n2"]]
    replay = [["read", "b", "m2"], ["read", "a", "m1"]]
    ablated = {"node": "zz", "op": "send", "obj": "x", "dependents": []}
    assert not rule_oracle.judge_core_eq("t", original, replay, ablated, ordered=True)
    assert rule_oracle.judge_core_eq("t", original, replay, ablated, ordered=False)


def test_out_eq_identity(rule_oracle):
    out = {"fields": {"completed": True, "artifacts.report": "r"}, "text_tokens": ["report"]}
    assert rule_oracle.judge_out_eq("t", out, out)


def test_out_eq_masked_side_effect_field(rule_oracle):
    # the sent/not-sent difference lives outside the relevant field set
    a = {"fields": {"completed": True, "artifacts.report": "r"}, "text_tokens": ["report"]}
    b = {"fields": {"completed": True, "artifacts.report": "r"}, "text_tokens": ["report"]}
    assert rule_oracle.judge_out_eq("t", a, b)


def test_out_eq_empty_report_body_false(rule_oracle):
    a = {"fields": {"completed": True, "artifacts.report": "full body"}, "text_tokens": ["full", "body"]}
    b = {"fields": {"completed": True, "artifacts.report": ""}, "text_tokens": []}
    assert not rule_oracle.judge_out_eq("t", a, b)


def test_guard_text_matches_template(rule_oracle):
    text = rule_oracle.synthesize_guard_text({
        "privilege_type": "external_transmission",
        "op": "send", "obj": "report", "head_obj": "report", "dest": "telegram",
    })
    assert text == (
        "Only if the user explicitly asks to send the report to Telegram, "
        "perform the next step; otherwise skip it."
    )


def test_guard_text_with_invocation(rule_oracle):
    text = rule_oracle.synthesize_guard_text({
        "privilege_type": "external_transmission",
        "op": "send", "obj": "ingest", "head_obj": "ingest", "dest": None,
        "invocation": "python3 scripts/unit.py",
    })
    assert "run `python3 scripts/unit.py`" in text
    assert text.startswith("Only if the user explicitly asks to send the ingest")


def test_transcript_record_and_replay_byte_exact(tmp_path, rule_oracle):
    rule_oracle.classify_consistency(
        LOCAL_MONITOR_PROFILE,
        {"op": "send", "obj": "x", "obj_phrase": "x", "head_obj": "x",
         "dest": "telegram", "layer": "instr"},
        "-",
    )
    rule_oracle.judge_core_eq("t", [], [], {"node": "n", "op": "send", "obj": "x", "dependents": []})
    path = tmp_path / "transcript.jsonl"
    rule_oracle.save_transcript(path)

    replayer = TranscriptOracle(path)
    v = replayer.classify_consistency(
        LOCAL_MONITOR_PROFILE,
        {"op": "send", "obj": "x", "obj_phrase": "x", "head_obj": "x",
         "dest": "telegram", "layer": "instr"},
        "-",
    )
    assert v.verdict == rule_oracle.transcript[0].response["verdict"]
    assert v.rationale == rule_oracle.transcript[0].response["rationale"]
    replayer.save_transcript(tmp_path / "replayed.jsonl")
    assert (tmp_path / "replayed.jsonl").read_text().splitlines()[0] == \
        path.read_text().splitlines()[0]


def test_transcript_missing_entry_raises(tmp_path, rule_oracle):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    replayer = TranscriptOracle(path)
    with pytest.raises(OracleUnavailable):
        replayer.judge_out_eq("t", {"fields": {}, "text_tokens": []},
                              {"fields": {}, "text_tokens": []})


class _StubResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def json(self):
        return self._payload


def test_remote_oracle_posts_capability_envelope():
    seen = {}

    def post(url, json=None, headers=None, timeout=None):
        seen["url"] = url
        seen["body"] = json
        seen["headers"] = headers
        return _StubResponse({"result": {"verdict": "related", "rationale": "r", "confidence": 0.5}})

    oracle = RemoteOracle(url="https://oracle.internal/v1", token="tok", post_fn=post)
    verdict = oracle.classify_consistency(SYNC_PROFILE, {"op": "send", "obj": "report"}, "-")
    assert verdict.verdict == "related"
    assert seen["url"] == "https://oracle.internal/v1"
    assert seen["body"]["capability"] == "classify_consistency"
    assert seen["headers"]["Authorization"] == "Bearer tok"


def test_remote_oracle_retries_then_fails():
    calls = {"n": 0}

    def post(url, json=None, headers=None, timeout=None):
        calls["n"] += 1
        return _StubResponse({}, status=502)

    oracle = RemoteOracle(url="https://oracle.internal/v1", retries=2, post_fn=post)
    with pytest.raises(OracleUnavailable):
        oracle.judge_out_eq("t", {"fields": {}, "text_tokens": []},
                            {"fields": {}, "text_tokens": []})
    assert calls["n"] == 3


def test_make_oracle_specs(tmp_path):
    assert isinstance(make_oracle("rule"), RuleOracle)
    assert isinstance(make_oracle("remote"), RemoteOracle)
    t = tmp_path / "t.jsonl"
    t.write_text("")
    assert isinstance(make_oracle(f"transcript:{t}"), TranscriptOracle)
    with pytest.raises(ValueError):
        make_oracle("psychic")


def test_rule_oracle_is_pure_across_instances():
    request = {"profile": SYNC_PROFILE,
               "action": {"op": "send", "obj": "report", "obj_phrase": "the report",
                          "head_obj": "report", "dest": "telegram", "layer": "instr"},
               "context": "-"}
    a = RuleOracle()._compute("classify_consistency", dict(request))
    b = RuleOracle()._compute("classify_consistency", dict(request))
    assert a == b
    assert request_hash(request) == request_hash(json.loads(json.dumps(request)))


@given(
    a=st.sets(st.text(min_size=1, max_size=6), max_size=12),
    b=st.sets(st.text(min_size=1, max_size=6), max_size=12),
)
@settings(max_examples=120, deadline=None)
def test_jaccard_bounds_and_symmetry(a, b):
    j = jaccard(a, b)
    assert 0.0 <= j <= 1.0
    assert j == jaccard(b, a)
    if a == b:
        assert j == 1.0
