"""Task-conditioned privilege constraining.

For each validated over-privileged action: extract fixed-schema descriptors
from the validation tasks, normalize and cluster them, contrastively derive an
allow condition, then project the constraint back into the bundle. Instruction
actions get a semantic guard sentence inserted immediately before the step;
code actions get the privileged statement extracted into a task-specific
script unit that the default path no longer executes, with the invocation
guarded at the instruction layer. When extraction would break a data
dependency the action falls back to a rigid in-code guard with a diagnostic.
"""

from __future__ import annotations

import ast
import re
import textwrap
from dataclasses import dataclass

from .bundle import SkillBundle
from .errors import ConflictError, RefactorFailure, SkillfenceError, SpanConflict
from .graph import ActionNode, UnifiedGraph
from .oracle import SemanticOracle
from .replay import OverprivilegeVerdict, locate_statement, py_span
from .tasks import TaskInstance
from . import slots
from .slots import TaskContextDescriptor

GUARD_SLOTS = (
    "explicit_side_effect_request",
    "requested_operation",
    "operated_object",
    "destination",
    "execution_scope",
)


@dataclass(frozen=True)
class ContextCluster:
    key: tuple
    descriptors: tuple[TaskContextDescriptor, ...]
    labels: frozenset[str]


@dataclass(frozen=True)
class GuardCondition:
    clauses: tuple[tuple[str, object], ...]

    def __post_init__(self) -> None:
        names = {slot for slot, _ in self.clauses}
        if not names & {"explicit_side_effect_request", "requested_operation"}:
            raise ValueError("guard must reference the explicit request or the operation")
        unknown = names - set(GUARD_SLOTS)
        if unknown:
            raise ValueError(f"guard clauses over unknown slots: {unknown}")

    def evaluate(self, d: TaskContextDescriptor) -> bool:
        return all(getattr(d, slot) == value for slot, value in self.clauses)

    def render(self) -> str:
        values = dict(self.clauses)
        parts: list[str] = []
        if values.get("explicit_side_effect_request"):
            op = values.get("requested_operation")
            parts.append(f"explicit_request({op})" if op else "explicit_request")
        elif "requested_operation" in values:
            parts.append(f"operation={values['requested_operation']}")
        if "operated_object" in values:
            parts.append(f"object={values['operated_object']}")
        if "destination" in values:
            dest = values["destination"]
            pretty = dest.capitalize() if isinstance(dest, str) and dest.isalpha() else dest
            parts.append(f"destination={pretty}")
        if "execution_scope" in values:
            parts.append(f"scope={values['execution_scope']}")
        return " ∧ ".join(parts)

    def to_payload(self) -> list[list]:
        return [[slot, value] for slot, value in self.clauses]


@dataclass(frozen=True)
class Edit:
    artifact: str  # "instruction" | "script:<relpath>"
    start: int
    end: int
    replacement: str
    note: str = ""


@dataclass(frozen=True)
class ReorganizationPlan:
    edits: tuple[Edit, ...]
    new_scripts: tuple[tuple[str, str], ...]
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConstrainedNode:
    guard: GuardCondition
    action: str
    instruction_text: str
    code_edits: ReorganizationPlan | None = None


def extract_descriptor(
    task: TaskInstance, action: str, verdict: OverprivilegeVerdict
) -> TaskContextDescriptor:
    if verdict.candidate != action:
        raise SkillfenceError("verdict does not correspond to the given action")
    result = "unnecessary" if verdict.unnecessary else "necessary_or_unconfirmed"
    return slots.descriptor_from_prompt(task.prompt, result)


def normalize_and_cluster(descriptors: list[TaskContextDescriptor]) -> list[ContextCluster]:
    if not descriptors:
        raise SkillfenceError("at least one descriptor required")
    groups: dict[tuple, list[TaskContextDescriptor]] = {}
    for d in descriptors:
        groups.setdefault(d.slot_tuple(), []).append(d)
    clusters = [
        ContextCluster(
            key=key,
            descriptors=tuple(group),
            labels=frozenset(d.validation_result for d in group),
        )
        for key, group in groups.items()
    ]
    clusters.sort(key=lambda c: tuple(str(k) for k in c.key))
    return clusters


def synthesize_guard(clusters: list[ContextCluster], action: ActionNode) -> GuardCondition:
    if not any("unnecessary" in c.labels for c in clusters):
        raise SkillfenceError("guard synthesis needs at least one unnecessary context")
    for c in clusters:
        if len(c.labels) > 1:
            raise ConflictError(
                f"context {c.key} is labeled both unnecessary and necessary"
            )

    op = slots.op_kind(action.op)
    obj = action.head_obj or action.obj
    clauses: list[tuple[str, object]] = [
        ("explicit_side_effect_request", True),
        ("requested_operation", op),
        ("operated_object", obj),
    ]
    if action.dest:
        clauses.append(("destination", action.dest))

    def verified(guard: GuardCondition) -> bool:
        for c in clusters:
            for d in c.descriptors:
                value = guard.evaluate(d)
                if d.validation_result == "unnecessary" and value:
                    return False
                if d.validation_result == "necessary_or_unconfirmed" and not value:
                    return False
        return True

    guard = GuardCondition(tuple(clauses))
    if verified(guard):
        return guard
    # tighten with scope equality and retry once
    necessary_scopes = {
        d.execution_scope
        for c in clusters
        for d in c.descriptors
        if d.validation_result == "necessary_or_unconfirmed"
    }
    if len(necessary_scopes) == 1:
        scope = next(iter(necessary_scopes))
    else:
        scope = "external" if action.dest else "local_only"
    guard = GuardCondition(tuple(clauses + [("execution_scope", scope)]))
    if verified(guard):
        return guard
    raise ConflictError(
        f"no conjunction over descriptor slots separates the contexts for {action.id}"
    )


# -- projection into artifacts ---------------------------------------------------

_LINE_PREFIX_RE = re.compile(r"^(\s*)(?:(?:[-*+]|\d+[.)])[ \t]+)?")


def _line_bounds(raw: str, pos: int) -> tuple[int, int]:
    start = raw.rfind("\n", 0, pos) + 1
    end = raw.find("\n", pos)
    end = len(raw) if end < 0 else end + 1
    return start, end


def plan_instruction_guard(bundle: SkillBundle, g: UnifiedGraph,
                           cn: ConstrainedNode) -> tuple[Edit, ...]:
    node = g.node(cn.action)
    if node.layer != "instr":
        raise SkillfenceError("instruction guard planned for a code-layer node")
    raw = bundle.instruction_doc.raw_text
    start, _ = node.src.byte_range
    if raw[node.src.byte_range[0]: node.src.byte_range[1]] != node.src.excerpt:
        raise SpanConflict(f"stale provenance for {cn.action}")
    line_start, _ = _line_bounds(raw, start)
    prefix = _LINE_PREFIX_RE.match(raw[line_start:]).group(0)
    guard_line = f"{prefix}{cn.instruction_text}\n"
    if raw[:line_start].endswith(guard_line):
        return ()  # guard already present: idempotent
    return (Edit("instruction", line_start, line_start, guard_line,
                 note=f"guard inserted before {cn.action}"),)


def _imports_source(source: str, tree: ast.Module, starts: list[int]) -> list[str]:
    lines = []
    for stmt in tree.body:
        if isinstance(stmt, (ast.Import, ast.ImportFrom)):
            lo, hi = py_span(source, stmt, starts)
            lines.append(source[lo:hi])
    return lines


def _imported_names(tree: ast.Module) -> set[str]:
    names: set[str] = set()
    for stmt in tree.body:
        if isinstance(stmt, ast.Import):
            for a in stmt.names:
                names.add((a.asname or a.name).split(".")[0])
        elif isinstance(stmt, ast.ImportFrom):
            for a in stmt.names:
                names.add(a.asname or a.name)
    return names


def _free_names(stmt: ast.stmt, bound_elsewhere: set[str]) -> list[str]:
    assigned: set[str] = set()
    loaded: list[str] = []
    for n in ast.walk(stmt):
        if isinstance(n, ast.Name):
            if isinstance(n.ctx, ast.Store):
                assigned.add(n.id)
            elif isinstance(n.ctx, ast.Load):
                loaded.append(n.id)
    import builtins

    seen: set[str] = set()
    out: list[str] = []
    for name in loaded:
        if (name in assigned or name in seen or hasattr(builtins, name)
                or name in bound_elsewhere):
            continue
        seen.add(name)
        out.append(name)
    return out


def plan_code_reorganization(
    bundle: SkillBundle,
    g: UnifiedGraph,
    action: ActionNode,
    unit_path: str,
) -> ReorganizationPlan:
    relpath = action.src.artifact.split(":", 1)[1]
    script = bundle.script(relpath)
    if script is None:
        raise SkillfenceError(f"script not in bundle: {relpath}")
    source = script.source
    stmt, fn, starts = locate_statement(source, action.src.byte_range)
    if stmt is None:
        raise RefactorFailure(f"no statement encloses the action span in {relpath}")

    stmt_lo, stmt_hi = py_span(source, stmt, starts)

    # a downstream consumer of a value bound by this statement cannot move with it
    tree = ast.parse(source)
    stored = {
        n.id for n in ast.walk(stmt)
        if isinstance(n, ast.Name) and isinstance(n.ctx, ast.Store)
    }
    blocked: list[str] = []
    if stored:
        for n in ast.walk(tree):
            if not (isinstance(n, ast.Name) and isinstance(n.ctx, ast.Load)):
                continue
            if n.id not in stored:
                continue
            lo, hi = py_span(source, n, starts)
            if lo >= stmt_hi or hi <= stmt_lo:
                blocked.append(n.id)
    if blocked:
        op = slots.op_kind(action.op)
        flag = f"ALLOW_{op.upper()}_{re.sub(r'[^A-Za-z0-9]+', '_', (action.head_obj or action.obj)).upper()}"
        indent = " " * stmt.col_offset
        lines = source[stmt_lo:stmt_hi].split("\n")
        body_lines = [indent + "    " + lines[0]] + [
            "    " + ln if ln.strip() else ln for ln in lines[1:]
        ]
        guarded = f'if globals().get("{flag}"):\n' + "\n".join(body_lines)
        edit = Edit(f"script:{relpath}", stmt_lo, stmt_hi, guarded,
                    note=f"rigid in-code guard for {action.id}")
        return ReorganizationPlan(
            edits=(edit,),
            new_scripts=(),
            diagnostics=(
                f"extraction would break data dependency into {sorted(blocked)}; "
                f"fell back to a rigid guard in {relpath}",
            ),
        )

    imports = _imports_source(source, tree, starts)
    defined = {n.name for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))}
    params = _free_names(stmt, _imported_names(tree) | defined)
    stmt_src = textwrap.dedent(" " * stmt.col_offset + source[stmt_lo:stmt_hi])
    signature = ", ".join(f"{p}=None" for p in params)
    unit_name = "run_unit"
    body = textwrap.indent(stmt_src, "    ")
    header = '"""Task-specific unit; invoke only when the guarded task context applies."""'
    parts = [header, ""]
    if imports:
        parts.extend(imports)
        parts.append("")
    parts.append(f"def {unit_name}({signature}):")
    parts.append(body)
    parts.append("")
    parts.append('if __name__ == "__main__":')
    parts.append(f"    {unit_name}()")
    new_source = "\n".join(parts) + "\n"

    original_edit = Edit(
        f"script:{relpath}", stmt_lo, stmt_hi, "pass",
        note=f"privileged statement moved to {unit_path}",
    )
    return ReorganizationPlan(
        edits=(original_edit,),
        new_scripts=((unit_path, new_source),),
    )


def plan_code_instruction_constraint(
    bundle: SkillBundle, g: UnifiedGraph, action: ActionNode, guard_text: str
) -> Edit:
    """Guarded invocation line for the extracted unit, placed near the caller."""
    raw = bundle.instruction_doc.raw_text
    relpath = action.src.artifact.split(":", 1)[1]
    caller = None
    for n in g.action_nodes():
        if n.layer == "instr" and n.invoked_script == relpath:
            caller = n
            break
    if caller is not None:
        _, line_end = _line_bounds(raw, caller.src.byte_range[0])
        line_start, _ = _line_bounds(raw, caller.src.byte_range[0])
        prefix = _LINE_PREFIX_RE.match(raw[line_start:]).group(0)
        return Edit("instruction", line_end, line_end, f"{prefix}{guard_text}\n",
                    note=f"guarded invocation for {action.id}")
    lead = "" if raw.endswith("\n") or not raw else "\n"
    return Edit("instruction", len(raw), len(raw), f"{lead}{guard_text}\n",
                note=f"guarded invocation for {action.id}")


def _apply_edits(text: str, edits: list[Edit]) -> str:
    spans = sorted(edits, key=lambda e: (e.start, e.end, e.note))
    for a, b in zip(spans, spans[1:]):
        interior = max(a.start, b.start) < min(a.end, b.end)
        same_range = a.start == b.start and a.end == b.end and a.end > a.start
        if interior or same_range:
            raise SpanConflict(f"overlapping edits at {a.start}..{a.end} / {b.start}..{b.end}")
    out = text
    for e in sorted(edits, key=lambda e: (e.start, e.end, e.note), reverse=True):
        out = out[: e.start] + e.replacement + out[e.end:]
    return out


def insert_guard(bundle: SkillBundle, g: UnifiedGraph, cn: ConstrainedNode) -> SkillBundle:
    edits = plan_instruction_guard(bundle, g, cn)
    if not edits:
        return bundle
    new_raw = _apply_edits(bundle.instruction_doc.raw_text, list(edits))
    return bundle.with_instruction_text(new_raw)


def reorganize_script(bundle: SkillBundle, cn: ConstrainedNode,
                      oracle: SemanticOracle) -> SkillBundle:
    if cn.code_edits is None:
        raise SkillfenceError("constrained node carries no reorganization plan")
    plan = cn.code_edits
    out = bundle
    by_artifact: dict[str, list[Edit]] = {}
    for e in plan.edits:
        by_artifact.setdefault(e.artifact, []).append(e)
    for artifact, edits in sorted(by_artifact.items()):
        if artifact == "instruction":
            out = out.with_instruction_text(
                _apply_edits(out.instruction_doc.raw_text, edits)
            )
        else:
            relpath = artifact.split(":", 1)[1]
            out = out.with_script_source(
                relpath, _apply_edits(out.script(relpath).source, edits)
            )
    for path, source in plan.new_scripts:
        out = out.with_new_script(path, source)
    return out


def unit_script_path(bundle: SkillBundle, action: ActionNode) -> str:
    relpath = action.src.artifact.split(":", 1)[1]
    stem = relpath.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    obj_tok = (slots.alnum_tokens(action.head_obj or action.obj) or ["unit"])[0]
    base = f"scripts/{stem}_{slots.op_kind(action.op)}_{obj_tok}_unit.py"
    existing = {s.relative_path for s in bundle.scripts}
    path = base
    counter = 2
    while path in existing:
        path = base.replace("_unit.py", f"_unit{counter}.py")
        counter += 1
    return path


def build_constrained_node(
    bundle: SkillBundle,
    g: UnifiedGraph,
    action_id: str,
    clusters: list[ContextCluster],
    oracle: SemanticOracle,
    privilege_type: str,
) -> ConstrainedNode:
    action = g.node(action_id)
    guard = synthesize_guard(clusters, action)
    payload = {
        "privilege_type": privilege_type,
        "op": action.op,
        "obj": action.obj,
        "head_obj": action.head_obj,
        "dest": action.dest,
    }
    if action.layer == "instr":
        text = oracle.synthesize_guard_text(payload)
        return ConstrainedNode(guard=guard, action=action_id, instruction_text=text)
    unit_path = unit_script_path(bundle, action)
    payload["invocation"] = f"python3 {unit_path}"
    text = oracle.synthesize_guard_text(payload)
    plan = plan_code_reorganization(bundle, g, action, unit_path)
    if plan.new_scripts:
        instr_edit = plan_code_instruction_constraint(bundle, g, action, text)
        plan = ReorganizationPlan(
            edits=plan.edits + (instr_edit,),
            new_scripts=plan.new_scripts,
            diagnostics=plan.diagnostics,
        )
    return ConstrainedNode(
        guard=guard, action=action_id, instruction_text=text, code_edits=plan
    )


def project_constraints(
    bundle: SkillBundle,
    g: UnifiedGraph,
    nodes: list[ConstrainedNode],
) -> tuple[SkillBundle, dict]:
    """Apply all guards and reorganizations; returns (bundle, manifest)."""
    by_artifact: dict[str, list[Edit]] = {}
    new_scripts: list[tuple[str, str]] = []
    manifest_entries: list[dict] = []
    diagnostics: list[str] = []
    for cn in sorted(nodes, key=lambda c: c.action):
        edits: tuple[Edit, ...] = ()
        if cn.code_edits is not None:
            edits = cn.code_edits.edits
            new_scripts.extend(cn.code_edits.new_scripts)
            diagnostics.extend(cn.code_edits.diagnostics)
        else:
            edits = plan_instruction_guard(bundle, g, cn)
        for e in edits:
            by_artifact.setdefault(e.artifact, []).append(e)
        manifest_entries.append({
            "action": cn.action,
            "condition": cn.guard.render(),
            "clauses": cn.guard.to_payload(),
            "instruction_text": cn.instruction_text,
            "edits": [e.note for e in edits],
        })
    out = bundle
    for artifact, edits in sorted(by_artifact.items()):
        if artifact == "instruction":
            out = out.with_instruction_text(
                _apply_edits(out.instruction_doc.raw_text, edits)
            )
        else:
            relpath = artifact.split(":", 1)[1]
            script = out.script(relpath)
            if script is None:
                raise SkillfenceError(f"edit targets unknown script {relpath}")
            out = out.with_script_source(relpath, _apply_edits(script.source, edits))
    for path, source in new_scripts:
        if out.script(path) is None:
            out = out.with_new_script(path, source)
    manifest = {
        "schema": 1,
        "skill": bundle.metadata.name,
        "guards": manifest_entries,
        "diagnostics": diagnostics,
    }
    return out, manifest
