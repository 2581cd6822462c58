"""Built-in agent driver: a deterministic interpreter over the rebuilt graph.

The driver rebuilds the bundle's unified graph, derives a task descriptor from
the prompt, and walks from the entry node. Predicates over user intent are
evaluated against the descriptor (so instruction guards behave like guards);
environment predicates hold on first visit and fail on revisit, which both
terminates loops and mirrors once-through chain coverage. Actions execute
against sandbox shims, and an action whose data producers all failed to run
is skipped, mirroring the trace-subtraction rule used by the equivalence
judge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from .bundle import SkillBundle
from .code_graph import build_code_graph
from .config import Config
from .errors import DriverFailure
from .graph import (
    EDGE_CALL,
    EDGE_CTRL,
    EDGE_RET,
    ActionNode,
    PredicateNode,
    UnifiedGraph,
    compose_graph,
)
from .instr_graph import build_instruction_graph
from .oracle import SemanticOracle
from .sandbox import Sandbox
from . import slots


@dataclass(frozen=True)
class TraceStep:
    tick: int
    op: str
    obj: str
    args: str
    node: str | None

    def to_dict(self) -> dict:
        return {"tick": self.tick, "op": self.op, "obj": self.obj,
                "args": self.args, "node": self.node}


@dataclass(frozen=True)
class ExecutionTrace:
    steps: tuple[TraceStep, ...]

    def node_ids(self) -> list[str]:
        return [s.node for s in self.steps if s.node is not None]


@dataclass(frozen=True)
class ExecutionOutput:
    structured: dict
    text: str


SIDE_EFFECT_KEYS = ("sent", "executed", "deleted", "written", "collected")


def build_unified_graph(bundle: SkillBundle, oracle: SemanticOracle) -> UnifiedGraph:
    """Full construction pipeline: instruction + per-script graphs, composed."""
    script_paths = [s.relative_path for s in bundle.scripts]
    instr = build_instruction_graph(
        bundle.instruction_doc, oracle, script_paths, bundle.metadata.name
    )
    code_graphs = {s.relative_path: build_code_graph(s) for s in bundle.scripts}
    return compose_graph(instr, code_graphs)


class AgentDriver(Protocol):
    def run(self, bundle: SkillBundle, prompt: str, sandbox: Sandbox,
            config: Config) -> tuple[ExecutionTrace, ExecutionOutput]:
        ...


@dataclass
class GraphInterpreterDriver:
    oracle: SemanticOracle

    def run(self, bundle: SkillBundle, prompt: str, sandbox: Sandbox,
            config: Config = Config()) -> tuple[ExecutionTrace, ExecutionOutput]:
        g = build_unified_graph(bundle, self.oracle)
        descriptor = slots.descriptor_from_prompt(prompt)
        prompt_stems = slots.stems(prompt)

        steps: list[TraceStep] = []
        produced: dict[str, str] = {}
        artifacts: dict[str, str] = {}
        side_effects: dict[str, list[str]] = {k: [] for k in SIDE_EFFECT_KEYS}
        pred_seen: set[str] = set()
        ret_stack: list[tuple[str, str]] = []  # (key, fallback target)
        tick = 0
        visits = 0
        current = g.entry

        while True:
            visits += 1
            if visits > config.max_driver_steps:
                raise DriverFailure("step budget exhausted (possible loop)")
            node = g.nodes.get(current)
            if node is None:
                raise DriverFailure(f"walk reached unknown node {current}")

            if node.kind == "exit":
                if current in g.exits and not ret_stack:
                    break
                if ret_stack:
                    key, _ = ret_stack[-1]
                    rets = [e for e in g.out_edges(current, (EDGE_RET,)) if e.label == key]
                    if rets:
                        ret_stack.pop()
                        current = rets[0].dst
                        continue
                break

            if isinstance(node, PredicateNode):
                value = self._eval_predicate(node, descriptor, prompt_stems, pred_seen)
                branch = "true" if value else "false"
                outs = [e for e in g.out_edges(current, (EDGE_CTRL,)) if e.label == branch]
                if not outs:
                    outs = g.out_edges(current, (EDGE_CTRL,))
                if not outs:
                    break
                current = outs[0].dst
                continue

            if isinstance(node, ActionNode):
                data_preds = g.data_predecessors(current)
                inputs = [produced[p] for p in data_preds if p in produced]
                skipped = bool(data_preds) and not inputs
                if not skipped:
                    tick += 1
                    value = self._perform(node, inputs, sandbox, artifacts, side_effects)
                    produced[current] = value
                    args = f"inputs={len(inputs)}"
                    if node.dest:
                        args += f" dest={node.dest}"
                    steps.append(TraceStep(tick, node.op, node.obj, args, current))
                    calls = g.out_edges(current, (EDGE_CALL,))
                    if calls:
                        call = calls[0]
                        succ = g.ctrl_successor(current)
                        ret_stack.append((call.label or "", succ or ""))
                        current = call.dst
                        continue

            succ = g.ctrl_successor(current)
            if succ is None:
                break
            current = succ

        text = "\n".join(f"{k}: {v}" for k, v in artifacts.items()) or "Task completed."
        output = ExecutionOutput(
            structured={
                "completed": True,
                "artifacts": dict(artifacts),
                "side_effects": {k: list(v) for k, v in side_effects.items()},
            },
            text=text,
        )
        trace = ExecutionTrace(tuple(steps))
        sandbox.write_trace([s.to_dict() for s in steps])
        return trace, output

    # -- helpers ---------------------------------------------------------------

    def _eval_predicate(self, node: PredicateNode, descriptor,
                        prompt_stems: set[str], seen: set[str]) -> bool:
        spec = slots.parse_user_request_condition(node.phi)
        if spec is not None:
            value = slots.matches_request(descriptor, spec)
        elif slots.is_user_condition(node.phi):
            value = bool(slots.stems(slots.user_condition_remainder(node.phi)) & prompt_stems)
        else:
            value = node.id not in seen  # environment facts hold once; loops exit
        seen.add(node.id)
        if node.negated:
            value = not value
        return value

    def _perform(self, node: ActionNode, inputs: list[str], sandbox: Sandbox,
                 artifacts: dict[str, str], side_effects: dict[str, list[str]]) -> str:
        kind = slots.op_kind(node.op)
        obj_text = node.obj_phrase or node.obj.replace("_", " ")
        if kind == "read":
            rel, content = sandbox.read_matching(obj_text)
            side_effects["collected"].append(node.obj)
            return content
        if kind == "collect":
            side_effects["collected"].append(node.obj)
            return f"<collected {node.obj}>"
        if kind == "receive":
            side_effects["collected"].append(node.obj)
            return f"<received {node.obj}>"
        if kind in ("generate", "transform"):
            label = node.head_obj or node.obj
            value = f"{label}[" + ("; ".join(inputs) if inputs else "fresh") + "]"
            artifacts[label] = value
            return value
        if kind == "write":
            name = f"{node.obj[:40] or 'output'}.txt"
            content = "\n".join(inputs) if inputs else f"<{node.obj}>"
            sandbox.write_file(name.replace("/", "_"), content)
            side_effects["written"].append(node.obj)
            return content
        if kind == "send":
            dest = node.dest or node.obj
            payload = "|".join(inputs) if inputs else f"<{node.obj}>"
            sandbox.send(dest, payload)
            side_effects["sent"].append(f"{node.obj}->{dest}")
            return payload
        if kind == "exec":
            out = sandbox.exec_command(obj_text)
            side_effects["executed"].append(node.obj)
            return out
        if kind == "delete":
            sandbox.delete_file(node.obj.replace("_", "/"))
            side_effects["deleted"].append(node.obj)
            return f"<deleted {node.obj}>"
        return f"<{node.op}>"
