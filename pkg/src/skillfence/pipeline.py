"""End-to-end orchestration: load, graph, screen, instantiate, replay, constrain."""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .bundle import SkillBundle, derive_profile, load_bundle
from .candidates import OverprivilegeCandidate, extract_candidates
from .config import Config
from .constrain import (
    ConstrainedNode,
    build_constrained_node,
    extract_descriptor,
    normalize_and_cluster,
    project_constraints,
)
from .driver import GraphInterpreterDriver, build_unified_graph
from .errors import ConflictError, DriverFailure
from .graph import UnifiedGraph
from .oracle import SemanticOracle, make_oracle
from .replay import (
    OverprivilegeVerdict,
    apply_ablation,
    confirm_overprivilege,
    execute,
    make_ablation,
    make_replay_record,
)
from .report import ActionInTaskEntry, ActionSummary, AnalysisReport
from .sandbox import Sandbox
from .tasks import ChainLimits, LocalFixtureProvider, TaskInstance, enumerate_chains, instantiate_task


@dataclass
class PipelineResult:
    bundle: SkillBundle
    graph: UnifiedGraph
    report: AnalysisReport
    candidates: list[OverprivilegeCandidate]
    verdicts: list[OverprivilegeVerdict] = field(default_factory=list)
    tasks: list[TaskInstance] = field(default_factory=list)
    constrained_bundle: SkillBundle | None = None
    constrained_manifest: dict | None = None
    oracle: SemanticOracle | None = None

    def tasks_json(self) -> list[dict]:
        return [
            {
                "prompt": t.prompt,
                "chain": list(t.chain.nodes) if t.chain is not None else [],
                "fixture_kind": t.fixture.kind if t.fixture else "none",
                "target_candidate": t.target_candidate,
                "unvalidatable_reason": t.unvalidatable_reason,
            }
            for t in self.tasks
        ]


def run_pipeline_on_bundle(
    bundle: SkillBundle,
    config: Config = Config(),
    oracle: SemanticOracle | None = None,
    workdir: str | Path | None = None,
) -> PipelineResult:
    oracle = oracle if oracle is not None else make_oracle(config.oracle)
    work = Path(workdir) if workdir is not None else Path(tempfile.mkdtemp(prefix="skillfence-"))
    work.mkdir(parents=True, exist_ok=True)

    graph = build_unified_graph(bundle, oracle)
    graph.validate(bundle)
    profile = derive_profile(bundle, config.summary_budget)
    candidates = extract_candidates(graph, profile, oracle, config.context_radius)
    driver = GraphInterpreterDriver(oracle)
    fixtures = LocalFixtureProvider()
    limits = ChainLimits(max_chains=config.max_chains, max_depth=config.max_depth)

    diagnostics = list(graph.diagnostics)
    entries: list[ActionInTaskEntry] = []
    verdicts: list[OverprivilegeVerdict] = []
    chains_stats: dict = {}
    truncation: dict = {}
    run_counter = 0

    all_tasks: list[TaskInstance] = []
    for cand in candidates:
        chain_set = enumerate_chains(graph, candidate=cand.node, limits=limits)
        chains_stats[cand.node] = len(chain_set.chains)
        truncation[cand.node] = chain_set.truncated
        tasks: list[TaskInstance] = []
        for chain in chain_set.chains:
            task = instantiate_task(chain, graph, profile, oracle, fixtures, cand.node)
            all_tasks.append(task)
            if task.unvalidatable_reason is not None:
                diagnostics.append(
                    f"task for {cand.node} unvalidatable: {task.unvalidatable_reason}"
                )
                continue
            tasks.append(task)
        ablation = make_ablation(graph, cand.node)
        ablated_bundle = apply_ablation(bundle, graph, cand.node)
        for task in tasks:
            run_counter += 1
            sandbox_orig = Sandbox(work / f"run{run_counter:04d}-orig")
            try:
                original = execute(bundle, task, driver, sandbox_orig, config)
            except DriverFailure as exc:
                diagnostics.append(f"driver failure (original) for {cand.node}: {exc}")
                continue
            sandbox_replay = Sandbox(work / f"run{run_counter:04d}-replay")
            try:
                replay = execute(ablated_bundle, task, driver, sandbox_replay, config)
            except DriverFailure as exc:
                diagnostics.append(f"driver failure (replay) for {cand.node}: {exc}")
                continue
            record = make_replay_record(task, ablation, original, replay)
            if not record.triggered:
                diagnostics.append(
                    f"untriggered: task did not exercise the chain for {cand.node}"
                )
                entries.append(ActionInTaskEntry(
                    action=cand.node, prompt=task.prompt, triggered=False,
                    unnecessary=False, core_eq=False, out_eq=False,
                    executed=False, note="untriggered",
                ))
                continue
            verdict = confirm_overprivilege(record, oracle, config)
            verdicts.append(verdict)
            entries.append(ActionInTaskEntry(
                action=cand.node, prompt=task.prompt, triggered=True,
                unnecessary=verdict.unnecessary, core_eq=verdict.core_eq,
                out_eq=verdict.out_eq,
                executed=verdict.candidate_executed_in_original,
            ))

    positive_actions = {v.candidate for v in verdicts if v.unnecessary}
    actions = [
        ActionSummary(
            node=c.node,
            layer=c.layer,
            op=graph.node(c.node).op,
            obj=graph.node(c.node).obj,
            privilege_type=c.privilege_type,
            rationale=c.verdict.rationale,
            excerpt=graph.node(c.node).src.excerpt,
            positive=c.node in positive_actions,
        )
        for c in candidates
    ]
    report = AnalysisReport(
        skill=bundle.metadata.name,
        skill_verdict=bool(positive_actions),
        actions=actions,
        action_in_task=entries,
        chains=chains_stats,
        truncation=truncation,
        diagnostics=diagnostics,
    )
    report.validate()
    result = PipelineResult(
        bundle=bundle,
        graph=graph,
        report=report,
        candidates=candidates,
        verdicts=verdicts,
        oracle=oracle,
    )

    if config.constrain and positive_actions:
        ptype_by_node = {c.node: c.privilege_type for c in candidates}
        constrained_nodes: list[ConstrainedNode] = []
        for action_id in sorted(positive_actions):
            descriptors = [
                extract_descriptor(v.task, action_id, v)
                for v in verdicts
                if v.candidate == action_id
            ]
            clusters = normalize_and_cluster(descriptors)
            try:
                cn = build_constrained_node(
                    bundle, graph, action_id, clusters, oracle,
                    ptype_by_node[action_id],
                )
            except ConflictError as exc:
                report.diagnostics.append(f"constraint conflict for {action_id}: {exc}")
                continue
            constrained_nodes.append(cn)
        if constrained_nodes:
            constrained, manifest = project_constraints(bundle, graph, constrained_nodes)
            result.constrained_bundle = constrained
            result.constrained_manifest = manifest
    return result


def run_pipeline(
    bundle_path: str | Path,
    config: Config = Config(),
    oracle: SemanticOracle | None = None,
    workdir: str | Path | None = None,
) -> PipelineResult:
    bundle = load_bundle(bundle_path)
    return run_pipeline_on_bundle(bundle, config, oracle, workdir)
