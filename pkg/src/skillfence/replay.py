"""Original-vs-ablated replay and over-privilege confirmation.

An ablation removes one instruction step (byte-exact single-region edit) or
neutralizes one code behavior (enclosing function body becomes an immediate
return). Both runs happen in fresh sandboxes under the same prompt; traces and
outputs are normalized and the equivalence judgments go through the oracle.
"""

from __future__ import annotations

import ast
import re
from collections import Counter
from dataclasses import dataclass

from .bundle import SkillBundle
from .config import Config
from .driver import AgentDriver, ExecutionOutput, ExecutionTrace
from .errors import AblationSpanConflict, DriverFailure, SkillfenceError
from .graph import ActionNode, UnifiedGraph, dependent_closure
from .oracle import SemanticOracle
from .sandbox import Sandbox
from .tasks import TaskInstance
from . import slots

MODE_INSTRUCTION = "remove_instruction_step"
MODE_CODE = "neutralize_code_body"

_SIDE_EFFECT_KEY = {"send": "sent", "exec": "executed", "delete": "deleted",
                    "write": "written", "collect": "collected",
                    "receive": "collected"}


@dataclass(frozen=True)
class Ablation:
    target: str
    mode: str
    op: str
    obj: str
    dependents: tuple[str, ...] = ()

    def payload(self) -> dict:
        return {
            "node": self.target,
            "op": self.op,
            "obj": self.obj,
            "dependents": list(self.dependents),
        }


@dataclass(frozen=True)
class ReplayRecord:
    task: TaskInstance
    ablation: Ablation
    original: tuple[ExecutionTrace, ExecutionOutput]
    replay: tuple[ExecutionTrace, ExecutionOutput]
    triggered: bool


@dataclass(frozen=True)
class OverprivilegeVerdict:
    candidate: str
    task: TaskInstance
    unnecessary: bool
    core_eq: bool
    out_eq: bool
    candidate_executed_in_original: bool

    def __post_init__(self) -> None:
        if self.unnecessary and not (
            self.core_eq and self.out_eq and self.candidate_executed_in_original
        ):
            raise ValueError("unnecessary verdict without its supporting conditions")


def make_ablation(g: UnifiedGraph, target: str) -> Ablation:
    node = g.node(target)
    if not isinstance(node, ActionNode):
        raise SkillfenceError(f"ablation target is not an action node: {target}")
    mode = MODE_INSTRUCTION if node.layer == "instr" else MODE_CODE
    dependents = tuple(sorted(dependent_closure(g, target) - {target}))
    return Ablation(target=target, mode=mode, op=node.op, obj=node.obj,
                    dependents=dependents)


# -- ablation edits ---------------------------------------------------------------


def _expand_to_line(raw: str, start: int, end: int) -> tuple[int, int]:
    """Grow a span to the whole line when the rest of the line is list chrome."""
    line_start = raw.rfind("\n", 0, start) + 1
    line_end = raw.find("\n", end)
    line_end = len(raw) if line_end < 0 else line_end + 1
    before = raw[line_start:start]
    after = raw[end: line_end]
    if re.fullmatch(r"\s*(?:[-*+]|\d+[.)])?\s*", before) and re.fullmatch(r"[.,;\s]*", after):
        return line_start, line_end
    return start, end


def ablate_instruction(bundle: SkillBundle, node: ActionNode) -> SkillBundle:
    raw = bundle.instruction_doc.raw_text
    start, end = node.src.byte_range
    if raw[start:end] != node.src.excerpt:
        raise AblationSpanConflict(f"stale provenance for {node.id}")
    lo, hi = _expand_to_line(raw, start, end)
    return bundle.with_instruction_text(raw[:lo] + raw[hi:])


def _py_line_starts(source: str) -> list[int]:
    starts = [0]
    for line in source.split("\n")[:-1]:
        starts.append(starts[-1] + len(line) + 1)
    return starts


def py_span(source: str, node: ast.AST, starts: list[int]) -> tuple[int, int]:
    def pos(lineno: int, col: int) -> int:
        line_start = starts[lineno - 1]
        line = source[line_start:].split("\n", 1)[0]
        return line_start + len(line.encode("utf-8")[:col].decode("utf-8", "ignore"))

    return pos(node.lineno, node.col_offset), pos(node.end_lineno, node.end_col_offset)


def locate_statement(source: str, span: tuple[int, int]):
    """(smallest enclosing stmt, enclosing function def or None) for a byte span."""
    tree = ast.parse(source)
    starts = _py_line_starts(source)
    best_stmt = None
    best_size = None
    enclosing_fn = None
    for n in ast.walk(tree):
        if isinstance(n, ast.stmt):
            lo, hi = py_span(source, n, starts)
            if lo <= span[0] and span[1] <= hi:
                size = hi - lo
                if best_size is None or size < best_size:
                    if not isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)):
                        best_stmt, best_size = n, size
        if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)):
            lo, hi = py_span(source, n, starts)
            if lo <= span[0] and span[1] <= hi:
                if enclosing_fn is None:
                    enclosing_fn = n
                else:
                    flo, fhi = py_span(source, enclosing_fn, starts)
                    if hi - lo < fhi - flo:
                        enclosing_fn = n
    return best_stmt, enclosing_fn, starts


def ablate_python(bundle: SkillBundle, relpath: str, span: tuple[int, int]) -> SkillBundle:
    script = bundle.script(relpath)
    source = script.source
    stmt, fn, starts = locate_statement(source, span)
    if fn is not None:
        body_lo, _ = py_span(source, fn.body[0], starts)
        _, body_hi = py_span(source, fn.body[-1], starts)
        new_source = source[:body_lo] + "return None" + source[body_hi:]
        return bundle.with_script_source(relpath, new_source)
    if stmt is None:
        raise AblationSpanConflict(f"no statement encloses span {span} in {relpath}")
    lo, hi = py_span(source, stmt, starts)
    return bundle.with_script_source(relpath, source[:lo] + "pass" + source[hi:])


def ablate_shell(bundle: SkillBundle, relpath: str, span: tuple[int, int]) -> SkillBundle:
    script = bundle.script(relpath)
    source = script.source
    line_start = source.rfind("\n", 0, span[0]) + 1
    line_end = source.find("\n", span[1])
    line_end = len(source) if line_end < 0 else line_end
    return bundle.with_script_source(relpath, source[:line_start] + ":" + source[line_end:])


def apply_ablation(bundle: SkillBundle, g: UnifiedGraph, target: str) -> SkillBundle:
    node = g.node(target)
    if not isinstance(node, ActionNode):
        raise SkillfenceError(f"ablation target is not an action node: {target}")
    if node.layer == "instr":
        return ablate_instruction(bundle, node)
    relpath = node.src.artifact.split(":", 1)[1]
    script = bundle.script(relpath)
    if script is None:
        raise SkillfenceError(f"script missing for ablation: {relpath}")
    if script.language_hint == "python":
        return ablate_python(bundle, relpath, node.src.byte_range)
    return ablate_shell(bundle, relpath, node.src.byte_range)


# -- execution and normalization ---------------------------------------------------


def execute(
    bundle: SkillBundle,
    task: TaskInstance,
    driver: AgentDriver,
    sandbox: Sandbox,
    config: Config = Config(),
) -> tuple[ExecutionTrace, ExecutionOutput]:
    if task.fixture is not None:
        sandbox.materialize(task.fixture.files)
    try:
        return driver.run(bundle, task.prompt, sandbox, config)
    except DriverFailure:
        raise


def normalize_trace(trace: ExecutionTrace) -> list[list]:
    return [[s.op, s.obj, s.node] for s in trace.steps]


def _matching_side_effects(values: list, descriptor: slots.TaskContextDescriptor) -> list[str]:
    """Only the entries the task actually asked for are task-relevant."""
    out: list[str] = []
    for v in values:
        s = str(v)
        if descriptor.destination:
            if (descriptor.destination == s
                    or descriptor.destination in slots.alnum_tokens(s)
                    or slots.normalize_destination(s) == descriptor.destination):
                out.append(s)
        elif descriptor.operated_object and descriptor.operated_object != "other":
            toks = slots.stems(s.replace("_", " ")) | set(slots.alnum_tokens(s))
            if slots.stem(descriptor.operated_object) in toks or descriptor.operated_object in toks:
                out.append(s)
        else:
            out.append(s)
    return sorted(out)


def relevant_output(output: ExecutionOutput, prompt: str) -> dict:
    """Task-relevant field projection of an output, per the driver schema.

    Side-effect counters join the relevant set only when the prompt explicitly
    requests that side effect, and then only the entries matching the requested
    object/destination; artifact content is always relevant.
    """
    descriptor = slots.descriptor_from_prompt(prompt)
    fields: dict = {"completed": output.structured.get("completed", False)}
    artifacts = output.structured.get("artifacts", {})
    for key in sorted(artifacts):
        fields[f"artifacts.{key}"] = " ".join(str(artifacts[key]).split())
    if descriptor.explicit_side_effect_request:
        se_key = _SIDE_EFFECT_KEY.get(descriptor.requested_operation)
        if se_key:
            values = output.structured.get("side_effects", {}).get(se_key, [])
            fields[f"side_effects.{se_key}"] = _matching_side_effects(values, descriptor)
    return {
        "fields": fields,
        "text_tokens": sorted(set(slots.tokenize(output.text))),
    }


def is_triggered(task: TaskInstance, original: ExecutionTrace) -> bool:
    """Original run must cover the chain's action multiset."""
    need = Counter(task.chain_action_ids)
    have = Counter(original.node_ids())
    return all(have[nid] >= count for nid, count in need.items())


def make_replay_record(
    task: TaskInstance,
    ablation: Ablation,
    original: tuple[ExecutionTrace, ExecutionOutput],
    replay: tuple[ExecutionTrace, ExecutionOutput],
) -> ReplayRecord:
    return ReplayRecord(
        task=task,
        ablation=ablation,
        original=original,
        replay=replay,
        triggered=is_triggered(task, original[0]),
    )


def confirm_overprivilege(
    record: ReplayRecord,
    oracle: SemanticOracle,
    config: Config = Config(),
) -> OverprivilegeVerdict:
    if not record.triggered:
        raise SkillfenceError("untriggered records must be discarded upstream")
    task = record.task
    ablation = record.ablation
    orig_trace, orig_out = record.original
    repl_trace, repl_out = record.replay

    executed = ablation.target in orig_trace.node_ids()
    orig_norm = normalize_trace(orig_trace)
    repl_norm = normalize_trace(repl_trace)

    target_key = (ablation.op, ablation.obj)
    orig_count = sum(1 for s in orig_norm if (s[0], s[1]) == target_key)
    target_occurrences = sum(
        1 for s in orig_norm if s[2] == ablation.target
    )
    repl_count = sum(1 for s in repl_norm if (s[0], s[1]) == target_key)
    absent_in_replay = repl_count == orig_count - target_occurrences

    core_eq = oracle.judge_core_eq(
        task.prompt, orig_norm, repl_norm, ablation.payload(),
        ordered=config.core_eq_ordered,
    )
    out_eq = oracle.judge_out_eq(
        task.prompt,
        relevant_output(orig_out, task.prompt),
        relevant_output(repl_out, task.prompt),
        threshold=config.jaccard_threshold,
    )
    return OverprivilegeVerdict(
        candidate=ablation.target,
        task=task,
        unnecessary=bool(executed and absent_in_replay and core_eq and out_eq),
        core_eq=core_eq,
        out_eq=out_eq,
        candidate_executed_in_original=executed,
    )
