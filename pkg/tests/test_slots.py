from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from skillfence import slots


def test_verb_canonicalization_table():
    assert slots.op_string("sync") == "send"
    assert slots.op_string("upload") == "send"
    assert slots.op_string("post") == "send"
    assert slots.op_string("summarize") == "transform"
    assert slots.op_string("frobnicate") == "other(frobnicate)"
    assert slots.op_kind("other(frobnicate)") == "other"
    assert slots.op_kind("send") == "send"


def test_parse_action_clause_with_destination():
    phrase = slots.parse_action_clause("sync the report to the incident endpoint")
    assert phrase.op == "send"
    assert phrase.head_obj == "report"
    assert phrase.dest == "endpoint"


def test_parse_action_clause_purpose_clause_is_not_destination():
    phrase = slots.parse_action_clause("run `python3 scripts/monitor.py` to capture details")
    assert phrase.op == "exec"
    assert phrase.dest is None


def test_pronoun_carries_object_forward():
    first = slots.parse_action_clause("generate the report")
    second = slots.parse_action_clause("send it to Alex on Telegram", first)
    assert second.head_obj == "report"
    assert second.dest == "telegram"


def test_condition_extraction_spans():
    cond = slots.extract_condition("If the config enables alerts, send alerts to ops.")
    assert cond is not None
    assert cond.text == "the config enables alerts"
    assert cond.remainder.startswith("send alerts")
    assert not cond.guard_forward
    sentence = "If the config enables alerts, send alerts to ops."
    assert sentence[cond.span[0]: cond.span[1]] == "the config enables alerts"


def test_guard_forward_condition():
    cond = slots.extract_condition(
        "Only if the user explicitly asks to send the report to Telegram, "
        "perform the next step; otherwise skip it."
    )
    assert cond.guard_forward
    spec = slots.parse_user_request_condition(cond.text)
    assert spec.op == "send"
    assert spec.head_obj == "report"
    assert spec.dest == "telegram"


def test_allow_flag_condition_parses_as_request():
    spec = slots.parse_user_request_condition('globals().get("allow_send_report")')
    assert spec is not None
    assert spec.op == "send"


def test_descriptor_four_worked_prompts_cluster_two_ways():
    prompts = [
        "Generate a local report for my deep-work history.",
        "Show my deep-work heatmap locally.",
        "Generate the report and send it to Alex on Telegram.",
        "Sync the report to the configured Telegram recipient.",
    ]
    tuples = [slots.descriptor_from_prompt(p).slot_tuple() for p in prompts]
    assert tuples[0] == tuples[1] == ("generate", "report", "local_only", None, False)
    assert tuples[2] == tuples[3] == ("send", "report", "external", "telegram", True)


def test_descriptor_intent_wording():
    d = slots.descriptor_from_prompt("Generate a local report for my deep-work history.")
    assert d.task_intent == "local report generation"
    d2 = slots.descriptor_from_prompt("Sync the report to the configured Telegram recipient.")
    assert d2.task_intent == "external report synchronization"


def test_descriptor_empty_prompt_degenerates():
    d = slots.descriptor_from_prompt("")
    assert d.requested_operation == "other"
    assert d.operated_object == "other"
    assert d.explicit_side_effect_request is False


def test_matches_request_generic_object_is_wildcard():
    spec = slots.RequestSpec(op="send", head_obj="results",
                             obj_stems=frozenset({"result"}), dest=None)
    d = slots.descriptor_from_prompt("Explicitly send the mood digest to the Slack workspace.")
    assert slots.matches_request(d, spec)


def test_matches_request_rejects_unrelated_operation():
    spec = slots.RequestSpec(op="collect", head_obj="history",
                             obj_stems=frozenset({"history"}), dest=None)
    d = slots.descriptor_from_prompt("Sync the report to the configured Telegram recipient.")
    assert not slots.matches_request(d, spec)


def test_stems_drop_stopwords():
    assert "the" not in slots.stems("the report and the file")
    assert {"report", "file"} <= slots.stems("the report and the file")


@given(st.text(max_size=200))
@settings(max_examples=200, deadline=None)
def test_descriptor_total_and_deterministic(text):
    d1 = slots.descriptor_from_prompt(text)
    d2 = slots.descriptor_from_prompt(text)
    assert d1 == d2
    assert d1.execution_scope in ("local_only", "cross_resource", "external")
    assert isinstance(d1.explicit_side_effect_request, bool)


@given(st.text(max_size=120))
@settings(max_examples=150, deadline=None)
def test_sentence_spans_are_well_formed(text):
    for lo, hi in slots.split_sentences(text):
        assert 0 <= lo <= hi <= len(text)
        assert text[lo:hi].strip()
