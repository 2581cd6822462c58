"""Unified execution graph: typed nodes, four edge families, invariants.

The graph is the shared substrate: instruction and code layers each build a
partial graph; composition links them with call/return edges keyed so that a
traversal entering a script through one invocation leaves through the same
invocation's return edge.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace

from .bundle import Provenance, SkillBundle
from .errors import UnknownNode
from . import slots

LAYER_INSTR = "instr"
LAYER_CODE = "code"

KIND_ACTION = "action"
KIND_PREDICATE = "predicate"
KIND_ENTRY = "entry"
KIND_EXIT = "exit"

EDGE_CTRL = "ctrl"
EDGE_DATA = "data"
EDGE_CALL = "call"
EDGE_RET = "ret"


def node_id(artifact: str, kind: str, start: int, end: int) -> str:
    """Stable id from provenance, so identical bundle bytes rebuild identical ids."""
    digest = hashlib.sha1(f"{artifact}|{kind}|{start}|{end}".encode()).hexdigest()[:10]
    prefix = {KIND_ACTION: "a", KIND_PREDICATE: "p", KIND_ENTRY: "n", KIND_EXIT: "x"}[kind]
    return f"{prefix}_{digest}"


@dataclass(frozen=True)
class ActionNode:
    id: str
    layer: str
    op: str             # canonical vocabulary entry or "other(<raw>)"
    obj: str            # normalized object, e.g. environment_files
    src: Provenance
    raw_verb: str = ""
    obj_phrase: str = ""
    head_obj: str = ""
    dest: str | None = None
    invoked_script: str | None = None
    unparsed: bool = False

    kind: str = KIND_ACTION

    def obj_stems(self) -> set[str]:
        out = slots.stems(self.obj_phrase or self.obj.replace("_", " "))
        if self.dest:
            out |= slots.stems(self.dest)
        return out


@dataclass(frozen=True)
class PredicateNode:
    id: str
    layer: str
    phi: str
    src: Provenance
    negated: bool = False

    kind: str = KIND_PREDICATE


@dataclass(frozen=True)
class StructuralNode:
    """Synthetic entry/exit marker; carries no provenance of its own."""

    id: str
    layer: str
    kind: str  # entry | exit
    artifact: str = "instruction"


Node = ActionNode | PredicateNode | StructuralNode


@dataclass(frozen=True)
class Edge:
    kind: str
    src: str
    dst: str
    label: str | None = None


@dataclass
class UnifiedGraph:
    nodes: dict[str, Node]
    edges: list[Edge]
    entry: str
    exits: set[str]
    owning_skill: str = ""
    detached: set[str] = field(default_factory=set)
    diagnostics: list[str] = field(default_factory=list)

    # -- basic views ---------------------------------------------------------

    def node(self, nid: str) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise UnknownNode(nid) from None

    def action_nodes(self) -> list[ActionNode]:
        return sorted(
            (n for n in self.nodes.values() if isinstance(n, ActionNode)),
            key=lambda n: n.id,
        )

    def out_edges(self, nid: str, kinds: tuple[str, ...] | None = None) -> list[Edge]:
        out = [e for e in self.edges if e.src == nid and (kinds is None or e.kind in kinds)]
        return sorted(out, key=lambda e: (e.kind, e.label or "", e.dst))

    def in_edges(self, nid: str, kinds: tuple[str, ...] | None = None) -> list[Edge]:
        out = [e for e in self.edges if e.dst == nid and (kinds is None or e.kind in kinds)]
        return sorted(out, key=lambda e: (e.kind, e.label or "", e.src))

    def ctrl_successor(self, nid: str) -> str | None:
        outs = self.out_edges(nid, (EDGE_CTRL,))
        return outs[0].dst if outs else None

    def data_predecessors(self, nid: str) -> list[str]:
        return [e.src for e in self.in_edges(nid, (EDGE_DATA,))]

    # -- invariants ----------------------------------------------------------

    def validate(self, bundle: SkillBundle | None = None) -> None:
        for e in self.edges:
            if e.src not in self.nodes or e.dst not in self.nodes:
                raise ValueError(f"edge endpoint missing: {e}")
            if e.kind == EDGE_CTRL and e.src == e.dst:
                raise ValueError(f"ctrl self-loop at {e.src}")
        if self.entry not in self.nodes:
            raise ValueError("entry node missing")
        if any(e.dst == self.entry for e in self.edges if e.kind == EDGE_CTRL):
            raise ValueError("entry has an incoming ctrl edge")
        for nid in self.exits:
            if nid not in self.nodes:
                raise ValueError(f"exit node missing: {nid}")
        for n in self.nodes.values():
            if isinstance(n, ActionNode):
                if n.layer not in (LAYER_INSTR, LAYER_CODE):
                    raise ValueError(f"bad layer on {n.id}")
                if not n.src.excerpt:
                    raise ValueError(f"action node {n.id} has empty provenance excerpt")
                if slots.op_kind(n.op) not in slots.CANONICAL_OPS and not n.op.startswith("other("):
                    raise ValueError(f"op outside vocabulary: {n.op}")
            elif isinstance(n, PredicateNode):
                if not n.phi:
                    raise ValueError(f"predicate node {n.id} has empty phi")
                if not n.src.excerpt:
                    raise ValueError(f"predicate node {n.id} has empty provenance excerpt")
        # every call edge pairs with a ret edge carrying the same key
        for e in self.edges:
            if e.kind == EDGE_CALL:
                if not any(r.kind == EDGE_RET and r.label == e.label for r in self.edges):
                    raise ValueError(f"call edge {e.label} has no matching ret edge")
        reachable = self.reachable_from_entry()
        for nid in self.nodes:
            if nid not in reachable and nid not in self.detached:
                raise ValueError(f"node {nid} unreachable and not flagged detached")
        if bundle is not None:
            for n in self.nodes.values():
                src = getattr(n, "src", None)
                if src is None:
                    continue
                text = bundle.artifact_text(src.artifact)
                lo, hi = src.byte_range
                if text[lo:hi] != src.excerpt:
                    raise ValueError(f"provenance mismatch for {n.id}")

    def reachable_from_entry(self) -> set[str]:
        seen = {self.entry}
        queue = deque([self.entry])
        while queue:
            cur = queue.popleft()
            for e in self.out_edges(cur, (EDGE_CTRL, EDGE_CALL, EDGE_RET)):
                if e.dst not in seen:
                    seen.add(e.dst)
                    queue.append(e.dst)
        return seen

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            entry: dict = {"id": n.id, "kind": n.kind, "layer": n.layer}
            if isinstance(n, ActionNode):
                entry["op"] = n.op
                entry["obj"] = n.obj
                entry["raw_verb"] = n.raw_verb
                entry["obj_phrase"] = n.obj_phrase
                entry["head_obj"] = n.head_obj
                if n.dest is not None:
                    entry["dest"] = n.dest
                if n.invoked_script is not None:
                    entry["invoked_script"] = n.invoked_script
                if n.unparsed:
                    entry["unparsed"] = True
            elif isinstance(n, PredicateNode):
                entry["phi"] = n.phi
                if n.negated:
                    entry["negated"] = True
            else:
                entry["artifact"] = n.artifact
            src = getattr(n, "src", None)
            if src is not None:
                entry["src"] = {
                    "artifact": src.artifact,
                    "start": src.byte_range[0],
                    "end": src.byte_range[1],
                    "excerpt": src.excerpt,
                }
            nodes.append(entry)
        edges = [
            {"kind": e.kind, "from": e.src, "to": e.dst, "label": e.label}
            for e in sorted(self.edges, key=lambda e: (e.kind, e.src, e.dst, e.label or ""))
        ]
        return {
            "nodes": nodes,
            "edges": edges,
            "entry": self.entry,
            "exits": sorted(self.exits),
            "owning_skill": self.owning_skill,
            "detached": sorted(self.detached),
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False)


def graph_from_json(data: dict | str) -> UnifiedGraph:
    if isinstance(data, str):
        data = json.loads(data)
    nodes: dict[str, Node] = {}
    for entry in data["nodes"]:
        src = None
        if "src" in entry:
            s = entry["src"]
            src = Provenance(s["artifact"], (s["start"], s["end"]), s["excerpt"])
        if entry["kind"] == KIND_ACTION:
            nodes[entry["id"]] = ActionNode(
                id=entry["id"],
                layer=entry["layer"],
                op=entry["op"],
                obj=entry["obj"],
                src=src,
                raw_verb=entry.get("raw_verb", ""),
                obj_phrase=entry.get("obj_phrase", ""),
                head_obj=entry.get("head_obj", ""),
                dest=entry.get("dest"),
                invoked_script=entry.get("invoked_script"),
                unparsed=entry.get("unparsed", False),
            )
        elif entry["kind"] == KIND_PREDICATE:
            nodes[entry["id"]] = PredicateNode(
                id=entry["id"],
                layer=entry["layer"],
                phi=entry["phi"],
                src=src,
                negated=entry.get("negated", False),
            )
        else:
            nodes[entry["id"]] = StructuralNode(
                id=entry["id"],
                layer=entry["layer"],
                kind=entry["kind"],
                artifact=entry.get("artifact", "instruction"),
            )
    edges = [Edge(e["kind"], e["from"], e["to"], e.get("label")) for e in data["edges"]]
    return UnifiedGraph(
        nodes=nodes,
        edges=edges,
        entry=data["entry"],
        exits=set(data["exits"]),
        owning_skill=data.get("owning_skill", ""),
        detached=set(data.get("detached", [])),
        diagnostics=list(data.get("diagnostics", [])),
    )


# -- context windows ---------------------------------------------------------


@dataclass(frozen=True)
class BidirectionalContext:
    node: str
    backward: tuple[str, ...]
    forward: tuple[str, ...]
    guards: tuple[str, ...]

    def render(self, g: UnifiedGraph) -> str:
        def describe(nid: str) -> str:
            n = g.node(nid)
            if isinstance(n, ActionNode):
                return f"{n.op}({n.obj})"
            if isinstance(n, PredicateNode):
                return f"if[{n.phi}]"
            return n.kind
        back = ", ".join(describe(n) for n in self.backward) or "-"
        fwd = ", ".join(describe(n) for n in self.forward) or "-"
        grd = ", ".join(describe(n) for n in self.guards) or "-"
        return f"backward: {back} | forward: {fwd} | guards: {grd}"


def _bfs(g: UnifiedGraph, start: str, radius: int, forward: bool) -> list[str]:
    found: list[tuple[int, str]] = []
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        cur, depth = frontier.popleft()
        if depth == radius:
            continue
        edges = g.out_edges(cur, (EDGE_CTRL, EDGE_DATA)) if forward else g.in_edges(cur, (EDGE_CTRL, EDGE_DATA))
        neighbors = sorted({e.dst if forward else e.src for e in edges})
        for nxt in neighbors:
            if nxt not in seen:
                seen.add(nxt)
                found.append((depth + 1, nxt))
                frontier.append((nxt, depth + 1))
    return [nid for _, nid in sorted(found)]


def context_window(g: UnifiedGraph, nid: str, radius: int) -> BidirectionalContext:
    """Predecessors, successors, and guarding predicates within ``radius`` hops."""
    g.node(nid)  # raises UnknownNode
    backward = _bfs(g, nid, radius, forward=False)
    forward = _bfs(g, nid, radius, forward=True)
    direct_guards = [
        e.src for e in g.in_edges(nid, (EDGE_CTRL,))
        if isinstance(g.nodes.get(e.src), PredicateNode)
    ]
    guards = sorted(
        set(direct_guards)
        | {b for b in backward if isinstance(g.nodes.get(b), PredicateNode)}
    )
    return BidirectionalContext(
        node=nid,
        backward=tuple(backward),
        forward=tuple(forward),
        guards=tuple(guards),
    )


# -- cross-layer composition ---------------------------------------------------


def compose_graph(
    instr: UnifiedGraph,
    code_graphs: dict[str, UnifiedGraph],
) -> UnifiedGraph:
    """Link instruction invocations to script graphs via keyed call/ret edges.

    Unreferenced scripts stay in the graph as detached subgraphs; invocations
    of scripts absent from the bundle are recorded as diagnostics, not errors.
    """
    nodes = dict(instr.nodes)
    edges = list(instr.edges)
    diagnostics = list(instr.diagnostics)
    referenced: set[str] = set()

    for path, cg in sorted(code_graphs.items()):
        nodes.update(cg.nodes)
        edges.extend(cg.edges)
        diagnostics.extend(cg.diagnostics)

    for n in sorted(instr.nodes.values(), key=lambda n: n.id):
        if not isinstance(n, ActionNode) or n.invoked_script is None:
            continue
        path = n.invoked_script
        cg = code_graphs.get(path)
        if cg is None:
            diagnostics.append(f"dangling invocation: {path} (from {n.id})")
            continue
        referenced.add(path)
        successor = instr.ctrl_successor(n.id)
        key = f"{n.id}->{path}"
        edges.append(Edge(EDGE_CALL, n.id, cg.entry, key))
        if successor is None:
            successor = sorted(instr.exits)[0]
        for ex in sorted(cg.exits):
            edges.append(Edge(EDGE_RET, ex, successor, key))

    g = UnifiedGraph(
        nodes=nodes,
        edges=edges,
        entry=instr.entry,
        exits=set(instr.exits),
        owning_skill=instr.owning_skill,
        diagnostics=diagnostics,
    )
    reachable = g.reachable_from_entry()
    g.detached = {nid for nid in g.nodes if nid not in reachable}
    for path in sorted(code_graphs):
        if path not in referenced:
            g.diagnostics.append(f"detached script subgraph: {path}")
    return g


def dependent_closure(g: UnifiedGraph, target: str) -> set[str]:
    """Target plus everything that only executes because of it.

    Covers actions whose data producers all sit inside the closure, and code
    subgraphs whose sole invocation is the target node.
    """
    closure = {target}
    tnode = g.nodes.get(target)
    if isinstance(tnode, ActionNode) and tnode.invoked_script:
        script_artifact = f"script:{tnode.invoked_script}"
        other_callers = [
            e for e in g.edges
            if e.kind == EDGE_CALL and e.src != target
            and getattr(g.nodes.get(e.dst), "artifact", None) == script_artifact
        ]
        if not other_callers:
            for nid, n in g.nodes.items():
                art = getattr(n, "artifact", None) or getattr(getattr(n, "src", None), "artifact", None)
                if art == script_artifact:
                    closure.add(nid)
    changed = True
    while changed:
        changed = False
        for nid, n in g.nodes.items():
            if nid in closure or not isinstance(n, ActionNode):
                continue
            producers = g.data_predecessors(nid)
            if producers and all(p in closure for p in producers):
                closure.add(nid)
                changed = True
    return closure
