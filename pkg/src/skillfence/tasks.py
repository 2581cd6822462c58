"""Chain enumeration and task instantiation.

Chains are entry-to-exit walks over ctrl/call/ret edges; traversal through a
script honors the invocation key so a shared script returns to the right
caller. Back-edges are taken at most once per chain, and truncation at the
configured limits is surfaced, never silent. Each chain becomes a prompt via
the oracle plus, when the chain's objects need one, a minimal deterministic
resource fixture.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bundle import SkillProfile
from .errors import UnsupportedResource
from .graph import (
    EDGE_CALL,
    EDGE_CTRL,
    EDGE_RET,
    ActionNode,
    PredicateNode,
    UnifiedGraph,
)
from .oracle import SemanticOracle
from . import slots


@dataclass(frozen=True)
class ActionChain:
    nodes: tuple[str, ...]
    predicate_assignments: tuple[tuple[str, str], ...] = ()

    def assignments(self) -> dict[str, str]:
        return dict(self.predicate_assignments)


@dataclass(frozen=True)
class ChainLimits:
    max_chains: int = 64
    max_depth: int = 128


@dataclass
class ChainSet:
    chains: list[ActionChain]
    truncated: bool = False


def enumerate_chains(
    g: UnifiedGraph,
    candidate: str | None = None,
    limits: ChainLimits = ChainLimits(),
) -> ChainSet:
    """Depth-first entry-to-exit path enumeration, candidate-aware when asked."""
    result = ChainSet(chains=[], truncated=False)

    def walk(current: str, path: list[str], assigns: list[tuple[str, str]],
             used_back: frozenset, stack: tuple[str, ...]) -> None:
        if result.truncated and len(result.chains) >= limits.max_chains:
            return
        if len(path) > limits.max_depth:
            result.truncated = True
            return
        if current in g.exits and not stack:
            if candidate is None or candidate in path:
                if len(result.chains) >= limits.max_chains:
                    result.truncated = True
                    return
                result.chains.append(ActionChain(tuple(path), tuple(assigns)))
            return
        node = g.nodes.get(current)
        call_edges = g.out_edges(current, (EDGE_CALL,))
        if call_edges:
            out = call_edges
        elif node is not None and node.kind == "exit" and stack:
            out = [e for e in g.out_edges(current, (EDGE_RET,)) if e.label == stack[-1]]
        else:
            out = g.out_edges(current, (EDGE_CTRL,))
        on_path = set(path)
        for e in out:
            is_back = e.dst in on_path
            key = (e.src, e.dst, e.kind, e.label)
            if is_back and key in used_back:
                continue
            new_used = used_back | {key} if is_back else used_back
            new_stack = stack
            if e.kind == EDGE_CALL:
                new_stack = stack + (e.label or "",)
            elif e.kind == EDGE_RET:
                new_stack = stack[:-1]
            new_assigns = assigns
            if isinstance(node, PredicateNode) and e.label in ("true", "false"):
                if all(a[0] != current for a in assigns):
                    new_assigns = assigns + [(current, e.label)]
            walk(e.dst, path + [e.dst], list(new_assigns), new_used, new_stack)

    walk(g.entry, [g.entry], [], frozenset(), ())
    return result


def chain_action_ids(g: UnifiedGraph, chain: ActionChain) -> tuple[str, ...]:
    return tuple(nid for nid in chain.nodes if isinstance(g.nodes.get(nid), ActionNode))


def _guarded_action(g: UnifiedGraph, chain: ActionChain, pid: str) -> ActionNode | None:
    """First action following the predicate on this chain, if any."""
    try:
        idx = chain.nodes.index(pid)
    except ValueError:
        return None
    for nid in chain.nodes[idx + 1:]:
        node = g.nodes.get(nid)
        if isinstance(node, ActionNode):
            return node
        if isinstance(node, PredicateNode):
            continue
        if node is not None and node.kind == "exit":
            return None
    return None


def verify_chain(g: UnifiedGraph, chain: ActionChain) -> bool:
    """Every consecutive pair must be joined by a ctrl/call/ret edge."""
    if not chain.nodes or chain.nodes[0] != g.entry or chain.nodes[-1] not in g.exits:
        return False
    for a, b in zip(chain.nodes, chain.nodes[1:]):
        if not any(
            e.src == a and e.dst == b and e.kind in (EDGE_CTRL, EDGE_CALL, EDGE_RET)
            for e in g.edges
        ):
            return False
    return True


# -- fixtures -------------------------------------------------------------------

_PNG_1PX = bytes.fromhex(
    "89504e470d0a1a0a0000000d4948445200000001000000010806000000"
    "1f15c4890000000d49444154789c63f8cfc0f01f0005050200"
    "5fc8f1d20000000049454e44ae426082"
)

MOCK_ENDPOINT = "mock://api.local/v1"


@dataclass(frozen=True)
class Fixture:
    kind: str  # none | file | repo | document | image | config_api
    files: tuple[tuple[str, bytes], ...] = ()
    setup_commands: tuple[str, ...] = ()


class FixtureProvider:
    """Interface for fixture construction; the local provider is hermetic."""

    def make(self, kind: str) -> Fixture:
        raise NotImplementedError


class LocalFixtureProvider(FixtureProvider):
    def make(self, kind: str) -> Fixture:
        if kind == "none":
            return Fixture("none")
        if kind == "file":
            return Fixture("file", (
                ("data/records.csv", b"id,value,label\n1,42,alpha\n2,17,beta\n"),
            ))
        if kind == "repo":
            return Fixture("repo", (
                ("repo/README.md", b"# toy repo\n\nA minimal repository fixture.\n"),
                ("repo/src/main.py", b"print('hello')\n"),
                ("repo/commits.log", b"c2 Add analysis module\nc1 Initial commit\n"),
            ))
        if kind == "document":
            return Fixture("document", (
                ("docs/note.md", b"# Note\n\nA minimal document with two sentences. It exists for testing.\n"),
            ))
        if kind == "image":
            return Fixture("image", (("images/sample.png", _PNG_1PX),))
        if kind == "config_api":
            return Fixture("config_api", (
                ("config/settings.json",
                 b'{"endpoint": "mock://api.local/v1", "token": "dummy"}'),
            ))
        raise UnsupportedResource(kind)


def check_fixture_hermetic(fixture: Fixture) -> None:
    for relpath, data in fixture.files:
        if relpath.startswith(("/", "~")) or ".." in relpath:
            raise UnsupportedResource(f"fixture path not workspace-relative: {relpath}")
        text = data.decode("utf-8", "ignore")
        for token in ("http://", "https://"):
            if token in text:
                raise UnsupportedResource(f"fixture references a live endpoint: {relpath}")


@dataclass(frozen=True)
class TaskInstance:
    prompt: str
    chain: ActionChain
    fixture: Fixture | None
    target_candidate: str | None = None
    chain_action_ids: tuple[str, ...] = ()
    unvalidatable_reason: str | None = None


def _fixture_kind_for(texts: list[str]) -> str:
    joined = " ".join(texts)
    toks = set(slots.tokenize(joined)) | set(slots.alnum_tokens(joined))
    if toks & set(slots.UNSUPPORTED_RESOURCE_STEMS):
        raise UnsupportedResource(
            "resource class outside the supported fixture taxonomy: "
            + ", ".join(sorted(toks & set(slots.UNSUPPORTED_RESOURCE_STEMS)))
        )
    for kind, terms in slots.RESOURCE_TERMS:
        if toks & terms:
            return kind
    return "none"


def instantiate_task(
    chain: ActionChain,
    g: UnifiedGraph,
    profile: SkillProfile,
    oracle: SemanticOracle,
    fixtures: FixtureProvider,
    target_candidate: str | None = None,
) -> TaskInstance:
    action_ids = chain_action_ids(g, chain)
    items = []
    seen_keys: set[tuple] = set()
    for nid in action_ids:
        n = g.nodes[nid]
        key = (n.op, n.obj)
        if key in seen_keys:
            continue
        seen_keys.add(key)
        items.append({
            "raw_verb": n.raw_verb,
            "op": n.op,
            "obj": n.obj,
            "obj_phrase": n.obj_phrase,
            "head_obj": n.head_obj,
            "dest": n.dest,
            "dest_phrase": None,
        })
    required = []
    for pid, branch in chain.predicate_assignments:
        if branch != "true":
            continue
        node = g.nodes.get(pid)
        if not isinstance(node, PredicateNode):
            continue
        spec = slots.parse_user_request_condition(node.phi)
        if spec is not None:
            # phrase the request around the action the predicate actually
            # guards, so the prompt names what will really happen
            guarded = _guarded_action(g, chain, pid)
            if guarded is not None and slots.op_kind(guarded.op) == slots.op_kind(spec.op):
                required.append({
                    "raw_verb": slots.op_kind(guarded.op),
                    "op": guarded.op,
                    "obj": guarded.obj,
                    "obj_phrase": guarded.obj_phrase or guarded.obj.replace("_", " "),
                    "head_obj": guarded.head_obj,
                    "dest": guarded.dest or spec.dest,
                    "dest_phrase": None,
                })
            else:
                verb = slots.op_kind(spec.op)
                required.append({
                    "raw_verb": verb,
                    "op": spec.op,
                    "obj": spec.head_obj,
                    "obj_phrase": f"the {spec.head_obj}".strip(),
                    "head_obj": spec.head_obj,
                    "dest": spec.dest,
                    "dest_phrase": None,
                })
        elif slots.is_user_condition(node.phi):
            remainder = slots.user_condition_remainder(node.phi)
            required.append({
                "raw_verb": "ask",
                "op": "other(ask)",
                "obj": remainder,
                "obj_phrase": remainder,
                "head_obj": "",
                "dest": None,
                "dest_phrase": None,
            })
    profile_payload = {
        "name": profile.name,
        "description": profile.description,
        "use_when": profile.use_when,
        "headings": list(profile.headings),
        "summary": profile.summary,
    }
    prompt = oracle.synthesize_prompt(profile_payload, items, required)
    texts = [i["obj_phrase"] or i["obj"] for i in items]
    try:
        kind = _fixture_kind_for(texts + [profile.description])
        fixture = fixtures.make(kind)
        check_fixture_hermetic(fixture)
        reason = None
    except UnsupportedResource as exc:
        fixture = None
        reason = str(exc)
    return TaskInstance(
        prompt=prompt,
        chain=chain,
        fixture=fixture,
        target_candidate=target_candidate,
        chain_action_ids=action_ids,
        unvalidatable_reason=reason,
    )
