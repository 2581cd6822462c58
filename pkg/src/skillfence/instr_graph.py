"""Instruction-layer graph construction.

A rule-based pass slices the instruction text into candidate fragments
(imperative steps, fenced/inline commands, conditional clauses) with exact
byte spans; the semantic oracle then normalizes fragments into atomic action
and predicate nodes and recovers data dependencies. Sequential steps are
chained with ctrl edges in document order; conditions become predicate nodes
with labeled true/false branches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .bundle import InstructionDoc, Provenance
from .graph import (
    EDGE_CTRL,
    EDGE_DATA,
    KIND_ACTION,
    KIND_ENTRY,
    KIND_EXIT,
    KIND_PREDICATE,
    LAYER_INSTR,
    ActionNode,
    Edge,
    PredicateNode,
    StructuralNode,
    UnifiedGraph,
    node_id,
)
from .oracle import SemanticOracle
from . import slots

ARTIFACT = "instruction"

_BULLET_RE = re.compile(r"^(\s*)(?:[-*+]|\d+[.)])\s+(.*)$")
_FENCE_RE = re.compile(r"^\s*(```|~~~)")
_CLAUSE_SPLIT_RE = re.compile(r",?\s+(?:and\s+then|then|and)\s+")


@dataclass(frozen=True)
class Fragment:
    start: int
    end: int
    text: str
    hint: str  # clause | command | predicate
    negated: bool = False
    guard_forward: bool = False


def _clause_spans(text: str, base: int) -> list[tuple[int, int]]:
    """Spans of verb-led clauses within a sentence, absolute offsets."""
    spans: list[tuple[int, int]] = []
    pos = 0
    for m in _CLAUSE_SPLIT_RE.finditer(text):
        rest = text[m.end():]
        lead = re.match(r"(?:also\s+|explicitly\s+|please\s+)*([A-Za-z]+)", rest, re.IGNORECASE)
        if lead and slots.canonical_verb(lead.group(1)) is not None:
            spans.append((base + pos, base + m.start()))
            pos = m.end()
    spans.append((base + pos, base + len(text)))
    return spans


def _sentence_fragments(raw: str, start: int, end: int) -> list[Fragment]:
    """Fragments for one sentence: optional condition plus action clauses."""
    sentence = raw[start:end]
    out: list[Fragment] = []
    cond = slots.extract_condition(sentence)
    body_start = start
    if cond is not None:
        cond_lo, cond_hi = start + cond.span[0], start + cond.span[1]
        out.append(
            Fragment(cond_lo, cond_hi, cond.text, "predicate",
                     negated=cond.negated, guard_forward=cond.guard_forward)
        )
        if cond.guard_forward or not cond.remainder:
            return out
        body_start = start + cond.remainder_start
    body = raw[body_start:end]
    for lo, hi in _clause_spans(body, body_start):
        text = raw[lo:hi].strip(" ,.")
        if text:
            shift = raw[lo:hi].index(text[0])
            out.append(Fragment(lo + shift, lo + shift + len(text), text, "clause"))
    return out


def extract_fragments(doc: InstructionDoc) -> list[Fragment]:
    """Rule-based cue pass: bullets, sentences, fenced command lines."""
    raw = doc.raw_text
    fragments: list[Fragment] = []
    in_fence = False
    offset = 0
    for line in raw.split("\n"):
        lo = offset
        offset += len(line) + 1
        if _FENCE_RE.match(line):
            in_fence = not in_fence
            continue
        if in_fence:
            cmd = line.strip()
            if cmd and not cmd.startswith("#"):
                shift = line.index(cmd[0])
                fragments.append(Fragment(lo + shift, lo + shift + len(cmd), cmd, "command"))
            continue
        bullet = _BULLET_RE.match(line)
        if bullet:
            text = bullet.group(2)
            base = lo + bullet.start(2)
            for s_lo, s_hi in slots.split_sentences(text):
                fragments.extend(_sentence_fragments(raw, base + s_lo, base + s_hi))
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        base = lo + line.index(stripped[0])
        for s_lo, s_hi in slots.split_sentences(stripped):
            abs_lo, abs_hi = base + s_lo, base + s_hi
            sentence = raw[abs_lo:abs_hi]
            first = re.match(r"[A-Za-z]+", sentence)
            is_cond = slots.extract_condition(sentence) is not None
            is_imperative = bool(first and slots.canonical_verb(first.group(0)) is not None)
            has_command = "`" in sentence
            if is_cond or is_imperative or has_command:
                fragments.extend(_sentence_fragments(raw, abs_lo, abs_hi))
    return fragments


def build_instruction_graph(
    doc: InstructionDoc,
    oracle: SemanticOracle,
    scripts: list[str] | None = None,
    skill_name: str = "",
) -> UnifiedGraph:
    raw = doc.raw_text
    fragments = extract_fragments(doc)
    request_frags = [
        {
            "text": f.text,
            "start": f.start,
            "end": f.end,
            "hint": f.hint,
            "negated": f.negated,
            "guard_forward": f.guard_forward,
        }
        for f in fragments
    ]
    normalized = oracle.normalize_actions(request_frags, scripts or [])
    items = normalized["items"]

    entry = StructuralNode(node_id(ARTIFACT, KIND_ENTRY, 0, 0), LAYER_INSTR, KIND_ENTRY, ARTIFACT)
    exit_node = StructuralNode(node_id(ARTIFACT, KIND_EXIT, 0, 0), LAYER_INSTR, KIND_EXIT, ARTIFACT)
    nodes: dict[str, object] = {entry.id: entry, exit_node.id: exit_node}
    edges: list[Edge] = []
    frag_node: dict[int, str] = {}

    heads: list[tuple[str, str | None]] = [(entry.id, None)]
    pending_skips: list[str] = []  # completed guards: false-edge binds to the next node
    guard_chain: list[str] = []    # guards of the upcoming action: false-edge skips past it

    def attach(nid: str) -> None:
        nonlocal heads, pending_skips
        for src, label in heads:
            edges.append(Edge(EDGE_CTRL, src, nid, label))
        for pred in pending_skips:
            edges.append(Edge(EDGE_CTRL, pred, nid, "false"))
        pending_skips = []

    for i, (frag, item) in enumerate(zip(fragments, items)):
        kind = item.get("kind")
        if kind == "predicate":
            src = Provenance(ARTIFACT, (frag.start, frag.end), raw[frag.start:frag.end])
            pid = node_id(ARTIFACT, KIND_PREDICATE, frag.start, frag.end)
            pnode = PredicateNode(pid, LAYER_INSTR, item["phi"], src, item.get("negated", False))
            nodes[pid] = pnode
            attach(pid)
            heads = [(pid, "true")]
            guard_chain.append(pid)
            frag_node[i] = pid
        elif kind == "action":
            src = Provenance(ARTIFACT, (frag.start, frag.end), raw[frag.start:frag.end])
            aid = node_id(ARTIFACT, KIND_ACTION, frag.start, frag.end)
            anode = ActionNode(
                id=aid,
                layer=LAYER_INSTR,
                op=item["op"],
                obj=item["obj"],
                src=src,
                raw_verb=item["raw_verb"],
                obj_phrase=item["obj_phrase"],
                head_obj=item["head_obj"],
                dest=item.get("dest"),
                invoked_script=item.get("invoked_script"),
            )
            nodes[aid] = anode
            attach(aid)
            heads = [(aid, None)]
            pending_skips = guard_chain
            guard_chain = []
            frag_node[i] = aid
        else:
            continue

    pending_skips = pending_skips + guard_chain
    attach(exit_node.id)

    for dep in normalized.get("data_deps", []):
        producer, consumer, label = dep
        if producer in frag_node and consumer in frag_node:
            src_id, dst_id = frag_node[producer], frag_node[consumer]
            if src_id != dst_id:
                edges.append(Edge(EDGE_DATA, src_id, dst_id, label))

    return UnifiedGraph(
        nodes=nodes,
        edges=edges,
        entry=entry.id,
        exits={exit_node.id},
        owning_skill=skill_name,
    )
