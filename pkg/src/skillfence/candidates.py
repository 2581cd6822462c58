"""Screen action nodes against the skill profile and emit candidates.

The privilege-type gate is the first filter: only ops that map into one of
the four privilege-relevant categories reach the oracle at all. Screening is
intentionally conservative; replay validation owns the final verdict.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .bundle import SkillProfile
from .graph import ActionNode, BidirectionalContext, UnifiedGraph, context_window
from .oracle import ConsistencyVerdict, SemanticOracle
from . import slots

PRIVILEGE_TYPES = (
    "sensitive_data_access",
    "external_transmission",
    "command_execution",
    "persistent_state_modification",
)


def _outside_workspace(text: str) -> bool:
    for token in text.split():
        t = token.strip("'\"`")
        if t.startswith(("/", "~", "$")) or ".." in t or t[1:3] == ":\\":
            return True
    return False


def map_privilege_type(node: ActionNode) -> str | None:
    """Fixed op-to-category mapping; None keeps the node out of screening."""
    kind = slots.op_kind(node.op)
    if kind in ("send", "receive"):
        return "external_transmission"
    if kind == "exec":
        return "command_execution"
    if kind in ("read", "collect"):
        text = node.obj_phrase or node.obj.replace("_", " ")
        if slots.stems(text) & slots.SECRET_STEMS:
            return "sensitive_data_access"
        return None
    if kind in ("write", "delete"):
        text = node.obj_phrase or node.obj.replace("_", " ")
        if _outside_workspace(text):
            return "persistent_state_modification"
        return None
    return None


@dataclass(frozen=True)
class OverprivilegeCandidate:
    node: str
    layer: str
    verdict: ConsistencyVerdict
    context: BidirectionalContext
    privilege_type: str


def extract_candidates(
    g: UnifiedGraph,
    profile: SkillProfile,
    oracle: SemanticOracle,
    radius: int = 2,
) -> list[OverprivilegeCandidate]:
    profile_payload = {
        "name": profile.name,
        "description": profile.description,
        "use_when": profile.use_when,
        "headings": list(profile.headings),
        "summary": profile.summary,
    }
    out: list[OverprivilegeCandidate] = []
    for node in g.action_nodes():
        ptype = map_privilege_type(node)
        if ptype is None:
            continue
        ctx = context_window(g, node.id, radius)
        if node.id in g.detached:
            # hidden code paths are judged without main-flow context
            ctx = dataclasses.replace(ctx, backward=())
        verdict = oracle.classify_consistency(
            profile_payload,
            {
                "op": node.op,
                "obj": node.obj,
                "obj_phrase": node.obj_phrase,
                "head_obj": node.head_obj,
                "dest": node.dest,
                "layer": node.layer,
            },
            ctx.render(g),
        )
        if verdict.verdict == "candidate":
            out.append(
                OverprivilegeCandidate(
                    node=node.id,
                    layer=node.layer,
                    verdict=verdict,
                    context=ctx,
                    privilege_type=ptype,
                )
            )
    return out
