"""Analysis report at the three granularities: skill, action, action-in-task."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ActionSummary:
    node: str
    layer: str
    op: str
    obj: str
    privilege_type: str
    rationale: str
    excerpt: str
    positive: bool

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "layer": self.layer,
            "op": self.op,
            "obj": self.obj,
            "privilege_type": self.privilege_type,
            "rationale": self.rationale,
            "excerpt": self.excerpt,
            "positive": self.positive,
        }


@dataclass(frozen=True)
class ActionInTaskEntry:
    action: str
    prompt: str
    triggered: bool
    unnecessary: bool
    core_eq: bool
    out_eq: bool
    executed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "prompt": self.prompt,
            "triggered": self.triggered,
            "unnecessary": self.unnecessary,
            "core_eq": self.core_eq,
            "out_eq": self.out_eq,
            "executed": self.executed,
            "note": self.note,
        }


@dataclass
class AnalysisReport:
    skill: str
    skill_verdict: bool
    actions: list[ActionSummary] = field(default_factory=list)
    action_in_task: list[ActionInTaskEntry] = field(default_factory=list)
    chains: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def validate(self) -> None:
        has_positive = any(e.unnecessary for e in self.action_in_task)
        if self.skill_verdict != has_positive:
            raise ValueError("skill verdict must follow the existence condition")
        positive_actions = {e.action for e in self.action_in_task if e.unnecessary}
        for a in self.actions:
            if a.positive != (a.node in positive_actions):
                raise ValueError(f"action-level flag inconsistent for {a.node}")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "skill": self.skill,
            "skill_verdict": self.skill_verdict,
            "actions": [a.to_dict() for a in self.actions],
            "action_in_task": [e.to_dict() for e in self.action_in_task],
            "chains": self.chains,
            "truncation": self.truncation,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False)
