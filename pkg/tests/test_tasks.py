from __future__ import annotations

import pytest

from skillfence.bundle import derive_profile, parse_instruction_doc
from skillfence.driver import build_unified_graph
from skillfence.errors import UnsupportedResource
from skillfence.graph import ActionNode
from skillfence.instr_graph import build_instruction_graph
from skillfence.tasks import (
    ChainLimits,
    LocalFixtureProvider,
    check_fixture_hermetic,
    chain_action_ids,
    enumerate_chains,
    instantiate_task,
    verify_chain,
)


def brute_force_chains(g, candidate=None):
    """Independent naive enumerator: recursive walk over ctrl/call/ret edges,
    call stack honored by edge label, each back-edge used at most once."""
    out = []

    def rec(current, path, used_back, stack):
        node = g.nodes[current]
        if current in g.exits and not stack:
            if candidate is None or candidate in path:
                out.append(tuple(path))
            return
        calls = [e for e in g.edges if e.src == current and e.kind == "call"]
        if calls:
            edges = calls
        elif node.kind == "exit" and stack:
            edges = [e for e in g.edges
                     if e.src == current and e.kind == "ret" and e.label == stack[-1]]
        else:
            edges = [e for e in g.edges if e.src == current and e.kind == "ctrl"]
        for e in sorted(edges, key=lambda e: (e.kind, e.label or "", e.dst)):
            key = (e.src, e.dst, e.kind, e.label)
            back = e.dst in path
            if back and key in used_back:
                continue
            rec(
                e.dst,
                path + [e.dst],
                used_back | {key} if back else used_back,
                stack + (e.label,) if e.kind == "call"
                else (stack[:-1] if e.kind == "ret" else stack),
            )

    rec(g.entry, [g.entry], frozenset(), ())
    return sorted(out)


def _diamond_graph(rule_oracle):
    doc = parse_instruction_doc(
        "1. Read the input file.\n"
        "2. If the flag is set, transform the input file.\n"
        "3. Generate the summary.\n"
    )
    return build_instruction_graph(doc, rule_oracle)


def test_diamond_has_two_chains(rule_oracle):
    g = _diamond_graph(rule_oracle)
    result = enumerate_chains(g)
    assert len(result.chains) == 2
    assert not result.truncated
    assert sorted(c.nodes for c in result.chains) == brute_force_chains(g)
    for chain in result.chains:
        assert verify_chain(g, chain)


def test_empty_graph_one_trivial_chain(rule_oracle):
    g = build_instruction_graph(parse_instruction_doc(""), rule_oracle)
    result = enumerate_chains(g)
    assert len(result.chains) == 1
    assert chain_action_ids(g, result.chains[0]) == ()


def test_candidate_filter_keeps_only_covering_chains(rule_oracle):
    g = _diamond_graph(rule_oracle)
    transform = next(n for n in g.action_nodes() if n.op == "transform")
    result = enumerate_chains(g, candidate=transform.id)
    assert len(result.chains) == 1
    assert transform.id in result.chains[0].nodes
    assert [c.nodes for c in result.chains] == brute_force_chains(g, transform.id)


def test_predicate_assignments_recorded(rule_oracle):
    g = _diamond_graph(rule_oracle)
    result = enumerate_chains(g)
    assigns = sorted(tuple(c.assignments().values()) for c in result.chains)
    assert assigns == [("false",), ("true",)]


def test_truncation_flags(rule_oracle):
    doc = parse_instruction_doc("\n".join(
        f"{i}. If the flag {i} is set, generate the part {i}." for i in range(1, 7)
    ) + "\n")
    g = build_instruction_graph(doc, rule_oracle)
    full = enumerate_chains(g, limits=ChainLimits(max_chains=1024, max_depth=128))
    assert len(full.chains) == 64  # six independent branches
    capped = enumerate_chains(g, limits=ChainLimits(max_chains=5, max_depth=128))
    assert len(capped.chains) == 5
    assert capped.truncated
    assert capped.chains == full.chains[:5]  # deterministic prefix
    shallow = enumerate_chains(g, limits=ChainLimits(max_chains=1024, max_depth=3))
    assert shallow.truncated


def test_chains_through_call_and_ret(rule_oracle, repo_assistant_bundle):
    g = build_unified_graph(repo_assistant_bundle, rule_oracle)
    result = enumerate_chains(g)
    assert result.chains
    assert sorted(c.nodes for c in result.chains) == brute_force_chains(g)
    code_sends = [n.id for n in g.action_nodes()
                  if n.layer == "code" and n.op == "send"]
    assert code_sends
    covering = enumerate_chains(g, candidate=code_sends[0])
    assert covering.chains
    for chain in covering.chains:
        assert code_sends[0] in chain.nodes
        assert verify_chain(g, chain)


def test_loop_back_edge_taken_once():
    from skillfence.bundle import ScriptArtifact
    from skillfence.code_graph import build_code_graph
    from skillfence.graph import compose_graph
    from skillfence.instr_graph import build_instruction_graph as big
    from skillfence.oracle import RuleOracle

    script = ScriptArtifact("scripts/loop.py", "python", (
        "while pending:\n"
        "    send(item)\n"
    ))
    g = build_code_graph(script)
    # chains over the script's own entry/exit
    g2 = type(g)(nodes=g.nodes, edges=g.edges, entry=g.entry, exits=g.exits)
    result = enumerate_chains(g2)
    assert result.chains
    for chain in result.chains:
        # the loop body node appears at most twice (once per back-edge pass)
        for nid in set(chain.nodes):
            assert chain.nodes.count(nid) <= 2


# -- fixtures ---------------------------------------------------------------------


@pytest.mark.parametrize("text,kind", [
    ("summarize recent commits in the repository", "repo"),
    ("parse the records csv file", "file"),
    ("convert the markdown document", "document"),
    ("inspect the png image", "image"),
    ("load the endpoint configuration", "config_api"),
    ("greet the user", "none"),
])
def test_fixture_kind_selection(text, kind, rule_oracle, tmp_path):
    from skillfence.tasks import _fixture_kind_for

    assert _fixture_kind_for([text]) == kind


def test_fixture_contents_deterministic_and_hermetic():
    provider = LocalFixtureProvider()
    for kind in ("none", "file", "repo", "document", "image", "config_api"):
        f1 = provider.make(kind)
        f2 = provider.make(kind)
        assert f1 == f2
        check_fixture_hermetic(f1)
        for relpath, _ in f1.files:
            assert not relpath.startswith("/")


def test_unsupported_resource_flags_task(rule_oracle, tmp_path):
    from skillfence import synth
    from skillfence.bundle import load_bundle

    root = synth.materialize({
        "SKILL.md": "---\nname: dbskill\ndescription: run database reports\n---\n"
                    "1. Read the production database table.\n"
                    "2. Generate the usage report from the database table.\n",
    }, tmp_path / "db")
    bundle = load_bundle(root)
    g = build_unified_graph(bundle, rule_oracle)
    profile = derive_profile(bundle)
    chains = enumerate_chains(g).chains
    task = instantiate_task(chains[0], g, profile, rule_oracle, LocalFixtureProvider())
    assert task.unvalidatable_reason is not None
    assert task.fixture is None


def test_instantiate_repo_task(rule_oracle, repo_assistant_bundle):
    g = build_unified_graph(repo_assistant_bundle, rule_oracle)
    profile = derive_profile(repo_assistant_bundle)
    chains = enumerate_chains(g).chains
    task = instantiate_task(chains[0], g, profile, rule_oracle, LocalFixtureProvider())
    assert task.fixture.kind == "repo"
    assert "commits" in task.prompt.lower()
    assert task.chain_action_ids == chain_action_ids(g, task.chain)


def test_task_determinism(rule_oracle, deep_work_bundle):
    g = build_unified_graph(deep_work_bundle, rule_oracle)
    profile = derive_profile(deep_work_bundle)
    chains = enumerate_chains(g).chains
    a = [instantiate_task(c, g, profile, rule_oracle, LocalFixtureProvider()) for c in chains]
    b = [instantiate_task(c, g, profile, rule_oracle, LocalFixtureProvider()) for c in chains]
    assert a == b
