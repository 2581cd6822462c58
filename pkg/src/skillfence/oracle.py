"""Semantic-oracle seam: every fuzzy judgment goes through one interface.

Capabilities: normalize_actions, classify_consistency, synthesize_prompt,
judge_core_eq, judge_out_eq, synthesize_guard_text. The rule-based
implementation is a pure function of its inputs and is the default everywhere;
a transcript oracle replays recorded responses; the remote client speaks
JSON-over-HTTP. Every call is appended to the transcript.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import OracleFailure, OracleUnavailable
from . import slots

PRODUCER_OPS = frozenset({"read", "collect", "receive", "generate", "transform", "exec"})


@dataclass(frozen=True)
class ConsistencyVerdict:
    verdict: str  # related | candidate
    rationale: str
    confidence: float


@dataclass
class TranscriptEntry:
    capability: str
    request_hash: str
    request: dict
    response: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "capability": self.capability,
                "request_hash": self.request_hash,
                "request": self.request,
                "response": self.response,
            },
            sort_keys=True,
        )


def request_hash(request: dict) -> str:
    blob = json.dumps(request, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class SemanticOracle:
    """Base class: typed capability wrappers plus transcript logging."""

    def __init__(self) -> None:
        self.transcript: list[TranscriptEntry] = []

    # subclasses implement this
    def _compute(self, capability: str, request: dict) -> dict:
        raise NotImplementedError

    def _invoke(self, capability: str, request: dict) -> dict:
        response = self._compute(capability, request)
        self.transcript.append(
            TranscriptEntry(capability, request_hash(request), request, response)
        )
        return response

    def save_transcript(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.transcript:
                fh.write(entry.to_json() + "\n")

    # -- capability wrappers --------------------------------------------------

    def normalize_actions(self, fragments: list[dict], scripts: list[str]) -> dict:
        request = {"fragments": fragments, "scripts": sorted(scripts)}
        return self._invoke("normalize_actions", request)

    def classify_consistency(self, profile: dict, action: dict, context: str) -> ConsistencyVerdict:
        request = {"profile": profile, "action": action, "context": context}
        resp = self._invoke("classify_consistency", request)
        verdict = ConsistencyVerdict(
            verdict=resp["verdict"],
            rationale=resp["rationale"],
            confidence=float(resp["confidence"]),
        )
        if verdict.verdict == "candidate" and not verdict.rationale:
            raise OracleFailure("candidate verdict with empty rationale")
        return verdict

    def synthesize_prompt(self, profile: dict, chain: list[dict], required: list[dict]) -> str:
        request = {"profile": profile, "chain": chain, "required": required}
        return self._invoke("synthesize_prompt", request)["prompt"]

    def judge_core_eq(
        self,
        task: str,
        original: list[list],
        replay: list[list],
        ablated: dict,
        ordered: bool = True,
    ) -> bool:
        request = {
            "task": task,
            "original": original,
            "replay": replay,
            "ablated": ablated,
            "ordered": ordered,
        }
        return bool(self._invoke("judge_core_eq", request)["equal"])

    def judge_out_eq(self, task: str, original: dict, replay: dict, threshold: float = 0.9) -> bool:
        request = {
            "task": task,
            "original": original,
            "replay": replay,
            "threshold": threshold,
        }
        return bool(self._invoke("judge_out_eq", request)["equal"])

    def synthesize_guard_text(self, payload: dict) -> str:
        return self._invoke("synthesize_guard_text", dict(payload))["text"]


# -- rule-based implementation -------------------------------------------------


def profile_stems(profile: dict) -> frozenset[str]:
    parts = [profile.get("name", ""), profile.get("description", ""),
             profile.get("use_when") or ""]
    parts.extend(profile.get("headings", ()))
    return frozenset(s for p in parts for s in slots.stems(p))


def action_is_declared(profile: dict, action: dict) -> tuple[bool, str]:
    """Shared consistency rule: (declared?, rationale)."""
    prof = profile_stems(profile)
    obj_text = action.get("obj_phrase") or action.get("obj", "").replace("_", " ")
    obj_stems = slots.stems(obj_text)
    dest = action.get("dest")
    if dest:
        obj_stems |= slots.stems(dest)
    overlap = obj_stems & prof
    if dest and slots.is_endpoint_literal(dest) and not (slots.stems(dest) & prof):
        return False, f"destination '{dest}' is an external endpoint not declared by the profile"
    if not overlap:
        return False, (
            f"operation '{action.get('op')}' on '{obj_text or '<unspecified>'}' "
            "shares no vocabulary with the declared profile"
        )
    return True, f"object vocabulary ({', '.join(sorted(overlap)[:4])}) overlaps the declared profile"


def _rule_normalize(request: dict) -> dict:
    items: list[dict] = []
    producers: list[tuple[int, set[str], str]] = []
    data_deps: list[list] = []
    scripts = request.get("scripts", [])
    prev_phrase: slots.ActionPhrase | None = None
    for i, frag in enumerate(request["fragments"]):
        text = frag["text"]
        hint = frag.get("hint", "clause")
        if hint == "predicate":
            items.append({
                "kind": "predicate",
                "phi": " ".join(text.split()).strip().rstrip(".,;").lower(),
                "negated": bool(frag.get("negated")),
                "guard_forward": bool(frag.get("guard_forward")),
            })
            continue
        phrase = slots.parse_action_clause(text, prev_phrase)
        if phrase is None or (slots.op_kind(phrase.op) == "other" and hint != "command"):
            items.append({"kind": "none"})
            continue
        invoked = None
        for sp in scripts:
            if sp in text or text.endswith(sp.split("/")[-1]):
                invoked = sp
                break
        if invoked is None:
            ref = re.search(r"(?:[\w.-]+/)*[\w.-]+\.(?:py|sh|bash)\b", text)
            if ref:
                invoked = ref.group(0)
        item = {
            "kind": "action",
            "raw_verb": phrase.raw_verb,
            "op": phrase.op,
            "obj": phrase.obj,
            "obj_phrase": phrase.obj_phrase,
            "head_obj": phrase.head_obj,
            "dest": phrase.dest,
            "dest_phrase": phrase.dest_phrase,
            "invoked_script": invoked,
        }
        items.append(item)
        prev_phrase = phrase
        consumed = phrase.obj_stems()
        for j, pstems, phead in reversed(producers):
            if consumed & pstems:
                data_deps.append([j, i, phead])
        if slots.op_kind(phrase.op) in PRODUCER_OPS:
            produce = set(slots.stems(phrase.obj_phrase))
            produce.add(slots.stem(phrase.head_obj))
            producers.append((i, produce, phrase.head_obj))
    return {"items": items, "data_deps": sorted(data_deps)}


def _rule_classify(request: dict) -> dict:
    declared, rationale = action_is_declared(request["profile"], request["action"])
    if declared:
        return {"verdict": "related", "rationale": rationale, "confidence": 0.75}
    return {"verdict": "candidate", "rationale": rationale, "confidence": 0.9}


def _render_phrase(item: dict) -> str:
    verb = (item.get("raw_verb") or slots.op_kind(item.get("op", ""))).lower()
    obj = item.get("obj_phrase") or item.get("obj", "").replace("_", " ")
    phrase = f"{verb} {obj}".strip()
    dest = item.get("dest_phrase") or item.get("dest")
    if dest and slots.op_kind(item.get("op", "")) in ("send", "receive"):
        phrase += f" to {dest}"
    return phrase


def _rule_prompt(request: dict) -> dict:
    profile = request["profile"]
    kept: list[dict] = []
    for item in request["chain"]:
        if slots.op_kind(item.get("op", "")) == "other":
            continue
        declared, _ = action_is_declared(profile, item)
        if declared:
            kept.append(item)
    phrases: list[str] = []
    seen: set[tuple] = set()
    for item in kept:
        key = (item.get("op"), item.get("obj"))
        if key in seen:
            continue
        seen.add(key)
        phrases.append(_render_phrase(item))
    for req in request["required"]:
        phrase = _render_phrase(req)
        phrases.append(f"explicitly {phrase}")
    if not phrases:
        return {"prompt": "Run the skill's default task."}
    body = phrases[0]
    if len(phrases) > 1:
        body += ", then " + ", then ".join(phrases[1:])
    scope = ""
    prof_tokens = set(slots.tokenize(profile.get("description", "") + " " + profile.get("name", "")))
    if prof_tokens & {"repository", "repo", "repositories"}:
        scope = " in this repository"
    prompt = body[0].upper() + body[1:] + scope + "."
    return {"prompt": prompt}


def subtract_trace(original: list[list], removed: set[str]) -> list[list]:
    return [step for step in original if step[2] not in removed]


def _rule_core_eq(request: dict) -> dict:
    ablated = request["ablated"]
    removed = {ablated["node"], *ablated.get("dependents", [])}
    expected = [tuple(s[:2]) for s in subtract_trace(request["original"], removed)]
    got = [tuple(s[:2]) for s in request["replay"]]
    if request.get("ordered", True):
        equal = expected == got
    else:
        equal = Counter(expected) == Counter(got)
    return {"equal": equal}


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def _rule_out_eq(request: dict) -> dict:
    orig, repl = request["original"], request["replay"]
    if orig["fields"] != repl["fields"]:
        return {"equal": False}
    j = jaccard(set(orig.get("text_tokens", [])), set(repl.get("text_tokens", [])))
    return {"equal": j >= request.get("threshold", 0.9)}


def _pretty_dest(dest: str | None) -> str | None:
    if dest is None:
        return None
    return dest.capitalize() if dest.isalpha() else dest


def _rule_guard_text(request: dict) -> dict:
    op = slots.op_kind(request.get("op", "send"))
    verb = {"send": "send", "exec": "run", "collect": "collect", "read": "read",
            "write": "write", "delete": "delete", "receive": "fetch"}.get(op, op)
    obj = (request.get("head_obj") or request.get("obj") or "action").replace("_", " ")
    dest = _pretty_dest(request.get("dest"))
    condition = f"the user explicitly asks to {verb} the {obj}"
    if dest:
        condition += f" to {dest}"
    invocation = request.get("invocation")
    if invocation:
        consequent = f"run `{invocation}`"
    else:
        consequent = "perform the next step"
    return {"text": f"Only if {condition}, {consequent}; otherwise skip it."}


_RULE_TABLE = {
    "normalize_actions": _rule_normalize,
    "classify_consistency": _rule_classify,
    "synthesize_prompt": _rule_prompt,
    "judge_core_eq": _rule_core_eq,
    "judge_out_eq": _rule_out_eq,
    "synthesize_guard_text": _rule_guard_text,
}


class RuleOracle(SemanticOracle):
    """Deterministic rule-based oracle; pure function of its inputs."""

    def _compute(self, capability: str, request: dict) -> dict:
        try:
            fn = _RULE_TABLE[capability]
        except KeyError:
            raise OracleFailure(f"unknown capability: {capability}") from None
        return fn(request)


class TranscriptOracle(SemanticOracle):
    """Replays responses recorded in a JSON-lines transcript file."""

    def __init__(self, path: str | Path) -> None:
        super().__init__()
        self._responses: dict[tuple[str, str], dict] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = json.loads(line)
                key = (entry["capability"], entry["request_hash"])
                self._responses[key] = entry["response"]

    def _compute(self, capability: str, request: dict) -> dict:
        key = (capability, request_hash(request))
        if key not in self._responses:
            raise OracleUnavailable(f"no transcript entry for {capability}/{key[1]}")
        return self._responses[key]


class RemoteOracle(SemanticOracle):
    """JSON-over-HTTP client: POST {capability, payload} -> {result, rationale}."""

    def __init__(
        self,
        url: str | None = None,
        token: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        post_fn=None,
    ) -> None:
        super().__init__()
        self.url = url or os.environ.get("SKILLFENCE_ORACLE_URL", "")
        self.token = token or os.environ.get("SKILLFENCE_ORACLE_TOKEN", "")
        self.timeout = timeout
        self.retries = retries
        if post_fn is None:
            import requests

            post_fn = requests.post
        self._post = post_fn

    def _compute(self, capability: str, request: dict) -> dict:
        if not self.url:
            raise OracleUnavailable("remote oracle URL not configured")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {"capability": capability, "payload": request}
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._post(self.url, json=body, headers=headers, timeout=self.timeout)
                if getattr(resp, "status_code", 500) != 200:
                    raise OracleUnavailable(f"oracle returned {resp.status_code}")
                return resp.json()["result"]
            except OracleUnavailable as exc:
                last_error = exc
            except Exception as exc:  # network/json errors
                last_error = exc
        raise OracleUnavailable(f"remote oracle failed after retries: {last_error}")


def make_oracle(spec: str) -> SemanticOracle:
    """Build an oracle from a CLI/config spec: rule | remote | transcript:<file>."""
    if spec == "rule":
        return RuleOracle()
    if spec == "remote":
        return RemoteOracle()
    if spec.startswith("transcript:"):
        return TranscriptOracle(spec.split(":", 1)[1])
    raise ValueError(f"unknown oracle spec: {spec}")
