"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``)."""

from __future__ import annotations

import json
import time
from collections import Counter, defaultdict
from pathlib import Path

import pytest

from skillfence import synth
from skillfence.bundle import derive_profile, load_bundle, write_bundle
from skillfence.config import Config
from skillfence.constrain import (
    build_constrained_node,
    extract_descriptor,
    normalize_and_cluster,
    project_constraints,
    synthesize_guard,
)
from skillfence.driver import GraphInterpreterDriver, build_unified_graph
from skillfence.graph import ActionNode, graph_from_json
from skillfence.oracle import RuleOracle
from skillfence.pipeline import run_pipeline_on_bundle
from skillfence.replay import (
    apply_ablation,
    confirm_overprivilege,
    execute,
    make_ablation,
    make_replay_record,
    normalize_trace,
    relevant_output,
)
from skillfence.sandbox import Sandbox
from skillfence.stats import StratifiedSample, as_percent, compute_stratified_validity
from skillfence.tasks import TaskInstance, chain_action_ids, enumerate_chains
from tests.test_tasks import brute_force_chains


def _report(name: str, ok: bool, elapsed: float) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({elapsed:.3f}s)")
    assert ok


# -- criterion 1: stratified-validity exact reproduction ---------------------------


def test_stratified_validity_exact_rows():
    rows = [
        (StratifiedSample(5541, 1498, 200, 100, 189, 93), 94.18, (91.48, 96.89)),
        (StratifiedSample(9846, 3171, 150, 50, 140, 46), 93.01, (89.48, 96.54)),
        (StratifiedSample(6075, 1642, 150, 50, 141, 46), 93.57, (90.18, 96.97)),
    ]
    t0 = time.perf_counter()
    results = [compute_stratified_validity(s, 1.96) for s, _, _ in rows]
    elapsed = time.perf_counter() - t0
    ok = elapsed < 0.001
    for result, (_, p, ci) in zip(results, rows):
        ok &= as_percent(result["p_hat"]) == p
        ok &= (as_percent(result["ci_low"]), as_percent(result["ci_high"])) == ci
    _report("stratified-validity-rows", ok, elapsed)


# -- criterion 2: worked example (send(report, Telegram)) ---------------------------

LOCAL_PROMPTS = [
    "Generate a local report for my deep-work history.",
    "Show my deep-work heatmap locally.",
]
SYNC_PROMPTS = [
    "Generate the report and send it to Alex on Telegram.",
    "Sync the report to the configured Telegram recipient.",
]


def test_worked_example_two_clusters_and_guard(tmp_path):
    t0 = time.perf_counter()
    oracle = RuleOracle()
    bundle = load_bundle(synth.materialize(synth.deep_work_files(), tmp_path / "dw"))
    g = build_unified_graph(bundle, oracle)
    send = next(n for n in g.action_nodes() if n.op == "send")
    chain = enumerate_chains(g, candidate=send.id).chains[0]
    driver = GraphInterpreterDriver(oracle)
    ablation = make_ablation(g, send.id)
    ablated_bundle = apply_ablation(bundle, g, send.id)

    verdicts = []
    tasks = []
    for i, prompt in enumerate(LOCAL_PROMPTS + SYNC_PROMPTS):
        task = TaskInstance(prompt=prompt, chain=chain, fixture=None,
                            chain_action_ids=chain_action_ids(g, chain))
        original = execute(bundle, task, driver, Sandbox(tmp_path / f"o{i}"))
        replay = execute(ablated_bundle, task, driver, Sandbox(tmp_path / f"r{i}"))
        record = make_replay_record(task, ablation, original, replay)
        verdicts.append(confirm_overprivilege(record, oracle))
        tasks.append(task)

    ok = [v.unnecessary for v in verdicts] == [True, True, False, False]

    descriptors = [extract_descriptor(t, send.id, v) for t, v in zip(tasks, verdicts)]
    clusters = normalize_and_cluster(descriptors)
    ok &= len(clusters) == 2
    guard = synthesize_guard(clusters, send)
    ok &= guard.render() == "explicit_request(send) ∧ object=report ∧ destination=Telegram"

    cn = build_constrained_node(bundle, g, send.id, clusters, oracle,
                                "external_transmission")
    constrained, _ = project_constraints(bundle, g, [cn])
    for i, prompt in enumerate(LOCAL_PROMPTS):
        trace, _ = driver.run(constrained, prompt, Sandbox(tmp_path / f"cl{i}"))
        ok &= all(s.op != "send" for s in trace.steps)
    for i, prompt in enumerate(SYNC_PROMPTS):
        trace, _ = driver.run(constrained, prompt, Sandbox(tmp_path / f"cs{i}"))
        ok &= any(s.op == "send" for s in trace.steps)

    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    _report("worked-example-guard", ok, elapsed)


# -- criterion 3: Unnec oracle equivalence on random fixtures -----------------------


def _brute_force_verdict(graph, bundle, task, target_id, tmp_base, tag):
    """Independent necessity computation: direct trace/output comparison."""
    driver = GraphInterpreterDriver(RuleOracle())
    orig_trace, orig_out = execute(
        bundle, task, driver, Sandbox(tmp_base / f"{tag}-o"))
    ablated = apply_ablation(bundle, graph, target_id)
    repl_trace, repl_out = execute(
        ablated, task, driver, Sandbox(tmp_base / f"{tag}-r"))

    executed_nodes = [s.node for s in orig_trace.steps]
    executed = target_id in executed_nodes

    # replay must equal the original minus the target and everything whose
    # executed data producers all disappeared with it
    producers = defaultdict(set)
    for e in graph.edges:
        if e.kind == "data":
            producers[e.dst].add(e.src)
    removed = {target_id}
    changed = True
    while changed:
        changed = False
        for nid in executed_nodes:
            if nid in removed:
                continue
            ran = {p for p in producers.get(nid, ()) if p in executed_nodes}
            if ran and ran <= removed:
                removed.add(nid)
                changed = True
    expected = [(s.op, s.obj) for s in orig_trace.steps if s.node not in removed]
    got = [(s.op, s.obj) for s in repl_trace.steps]
    core = expected == got

    target = graph.node(target_id)
    key = (target.op, target.obj)
    orig_count = sum(1 for s in orig_trace.steps if (s.op, s.obj) == key)
    occs = sum(1 for s in orig_trace.steps if s.node == target_id)
    repl_count = sum(1 for s in repl_trace.steps if (s.op, s.obj) == key)
    absent = repl_count == orig_count - occs

    out = (relevant_output(orig_out, task.prompt)["fields"]
           == relevant_output(repl_out, task.prompt)["fields"])
    return bool(executed and absent and core and out)


def test_unnec_matches_brute_force_on_random_suite(tmp_path):
    t0 = time.perf_counter()
    corpus = synth.random_corpus(seed=2024, count=50)
    total_cases = 0
    mismatches = 0
    polarities = set()
    for i, files in enumerate(corpus):
        bundle = synth.load_fixture(files, tmp_path / f"s{i:03d}")
        graph = build_unified_graph(bundle, RuleOracle())
        assert len(graph.action_nodes()) <= 8
        result = run_pipeline_on_bundle(bundle, Config(), workdir=tmp_path / f"w{i:03d}")
        for j, verdict in enumerate(result.verdicts):
            total_cases += 1
            polarities.add(verdict.unnecessary)
            brute = _brute_force_verdict(
                result.graph, bundle, verdict.task, verdict.candidate,
                tmp_path, f"b{i:03d}-{j:02d}",
            )
            if brute != verdict.unnecessary:
                mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = (total_cases >= 50 and mismatches == 0 and polarities == {True, False}
          and elapsed < 60.0)
    print(f"  cases={total_cases} mismatches={mismatches} polarities={sorted(polarities)}")
    _report("unnec-brute-force-equivalence", ok, elapsed)


# -- criterion 4: suppression and utility preservation ------------------------------


def test_suppression_and_utility_on_injected_corpus(tmp_path):
    t0 = time.perf_counter()
    corpus = synth.injected_corpus(seed=7, count=20)
    config = Config(constrain=True)
    unnecessary = suppressed = 0
    necessary = completed = core_ok = out_ok = 0
    rid = 0
    for i, files in enumerate(corpus):
        bundle = synth.load_fixture(files, tmp_path / f"s{i:03d}")
        result = run_pipeline_on_bundle(bundle, config, workdir=tmp_path / f"w{i:03d}")
        constrained = result.constrained_bundle or bundle
        driver = GraphInterpreterDriver(RuleOracle())
        for verdict in result.verdicts:
            rid += 1
            sb = Sandbox(tmp_path / f"re{rid:05d}")
            trace, output = execute(constrained, verdict.task, driver, sb)
            node = result.graph.node(verdict.candidate)
            present = any((s.op, s.obj) == (node.op, node.obj) for s in trace.steps)
            if verdict.unnecessary:
                unnecessary += 1
                suppressed += 0 if present else 1
            else:
                necessary += 1
                completed += 1 if output.structured.get("completed") else 0
                o_trace, o_out = execute(
                    bundle, verdict.task, driver, Sandbox(tmp_path / f"ro{rid:05d}"))
                suppressed_ops = {
                    (result.graph.node(v.candidate).op, result.graph.node(v.candidate).obj)
                    for v in result.verdicts
                    if v.unnecessary and v.task.prompt == verdict.task.prompt
                }
                expected = [(s[0], s[1]) for s in normalize_trace(o_trace)
                            if (s[0], s[1]) not in suppressed_ops]
                got = [(s[0], s[1]) for s in normalize_trace(trace)]
                core_ok += 1 if expected == got else 0
                out_ok += 1 if (
                    relevant_output(o_out, verdict.task.prompt)["fields"]
                    == relevant_output(output, verdict.task.prompt)["fields"]
                ) else 0
    elapsed = time.perf_counter() - t0
    print(f"  unnecessary={unnecessary} suppressed={suppressed} "
          f"necessary={necessary} completed={completed} core={core_ok} out={out_ok}")
    ok = (
        unnecessary > 0
        and suppressed == unnecessary                     # 100% suppression
        and necessary > 0
        and completed == core_ok == out_ok == necessary   # 100% utility
        and elapsed < 120.0
    )
    _report("suppression-and-utility", ok, elapsed)


# -- criterion 5: graph invariants over the fixture corpus --------------------------


def _fixture_corpus(tmp_path):
    named = [
        synth.deep_work_files(),
        synth.repo_assistant_files(),
        synth.benign_files(),
        synth.mixed_script_files(),
    ]
    randoms = synth.random_corpus(seed=11, count=20)
    bundles = []
    for i, files in enumerate(named + randoms):
        bundles.append(synth.load_fixture(files, tmp_path / f"c{i:03d}"))
    return bundles


def test_graph_invariants_full_corpus(tmp_path):
    t0 = time.perf_counter()
    violations = 0
    for bundle in _fixture_corpus(tmp_path):
        oracle = RuleOracle()
        g = build_unified_graph(bundle, oracle)
        try:
            g.validate(bundle)  # endpoint closure, partition, pairing, provenance
            g2 = graph_from_json(g.to_json())
            g2.validate()
            assert g2.to_json() == g.to_json()  # round-trip structure-preserving
        except (ValueError, AssertionError):
            violations += 1
    elapsed = time.perf_counter() - t0
    _report("graph-invariants", violations == 0, elapsed)


# -- criterion 6: chain enumeration equals brute force -------------------------------


def test_chain_enumeration_matches_brute_force(tmp_path):
    t0 = time.perf_counter()
    mismatches = 0
    checked = 0
    for bundle in _fixture_corpus(tmp_path):
        g = build_unified_graph(bundle, RuleOracle())
        if len(g.nodes) > 8 + 2:  # small graphs: up to 8 action/predicate nodes
            if len([n for n in g.nodes.values() if n.kind in ("action", "predicate")]) > 8:
                continue
        expected = brute_force_chains(g)
        got = sorted(c.nodes for c in enumerate_chains(g).chains)
        checked += 1
        if got != expected:
            mismatches += 1
        for node in g.action_nodes():
            expected_c = brute_force_chains(g, node.id)
            got_c = sorted(c.nodes for c in enumerate_chains(g, candidate=node.id).chains)
            if got_c != expected_c:
                mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = checked >= 10 and mismatches == 0
    print(f"  graphs checked={checked}")
    _report("chain-enumeration-oracle", ok, elapsed)


# -- criterion 7: determinism -------------------------------------------------------


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_determinism_byte_identical(tmp_path):
    t0 = time.perf_counter()
    config = Config(constrain=True, seed=3)
    outputs = []
    for run in ("one", "two"):
        bundle = load_bundle(
            synth.materialize(synth.deep_work_files(), tmp_path / f"src-{run}")
        )
        result = run_pipeline_on_bundle(bundle, config, workdir=tmp_path / f"w-{run}")
        out_dir = tmp_path / f"out-{run}"
        write_bundle(result.constrained_bundle, out_dir)
        transcript = tmp_path / f"t-{run}.jsonl"
        result.oracle.save_transcript(transcript)
        outputs.append((
            result.report.to_json(),
            result.graph.to_json(),
            json.dumps(result.constrained_manifest, sort_keys=True),
            _tree_bytes(out_dir),
            transcript.read_bytes(),
        ))
    elapsed = time.perf_counter() - t0
    _report("pipeline-determinism", outputs[0] == outputs[1], elapsed)


# -- criterion 8: bundle round-trip and single-region edits --------------------------


def _single_region_diff(a: str, b: str) -> bool:
    if a == b:
        return False
    lo = 0
    while lo < min(len(a), len(b)) and a[lo] == b[lo]:
        lo += 1
    hi = 0
    while hi < min(len(a), len(b)) - lo and a[len(a) - 1 - hi] == b[len(b) - 1 - hi]:
        hi += 1
    return a[:lo] + a[len(a) - hi:] == b[:lo] + b[len(b) - hi:]


def test_bundle_round_trip_and_golden_edits(tmp_path):
    t0 = time.perf_counter()
    ok = True
    for i, bundle in enumerate(_fixture_corpus(tmp_path)):
        out = tmp_path / f"rt{i:03d}"
        write_bundle(bundle, out)
        ok &= _tree_bytes(bundle.root_path) == _tree_bytes(out)

    oracle = RuleOracle()
    bundle = load_bundle(synth.materialize(synth.deep_work_files(), tmp_path / "golden"))
    g = build_unified_graph(bundle, oracle)
    send = next(n for n in g.action_nodes() if n.op == "send")

    ablated = apply_ablation(bundle, g, send.id)
    ok &= _single_region_diff(bundle.instruction_doc.raw_text,
                              ablated.instruction_doc.raw_text)
    ok &= ablated.scripts == bundle.scripts

    from skillfence.constrain import insert_guard

    cn = build_constrained_node(
        bundle, g, send.id,
        normalize_and_cluster([
            extract_descriptor(
                TaskInstance(prompt=p, chain=enumerate_chains(g).chains[0],
                             fixture=None, chain_action_ids=()),
                send.id,
                _fake_verdict(send.id, p),
            )
            for p in LOCAL_PROMPTS + SYNC_PROMPTS
        ]),
        oracle, "external_transmission",
    )
    guarded = insert_guard(bundle, g, cn)
    ok &= _single_region_diff(bundle.instruction_doc.raw_text,
                              guarded.instruction_doc.raw_text)
    elapsed = time.perf_counter() - t0
    _report("bundle-round-trip-and-edits", ok, elapsed)


def _fake_verdict(node_id: str, prompt: str):
    from skillfence.replay import OverprivilegeVerdict

    unnecessary = "telegram" not in prompt.lower()
    task = TaskInstance(prompt=prompt, chain=None, fixture=None)
    return OverprivilegeVerdict(
        candidate=node_id, task=task, unnecessary=unnecessary,
        core_eq=True, out_eq=unnecessary or True,
        candidate_executed_in_original=True,
    )
