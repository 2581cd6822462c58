"""Detect and constrain task-conditioned over-privilege in agent skill bundles."""

from .bundle import (
    InstructionDoc,
    Provenance,
    ScriptArtifact,
    SkillBundle,
    SkillMetadata,
    SkillProfile,
    derive_profile,
    load_bundle,
    write_bundle,
)
from .candidates import OverprivilegeCandidate, extract_candidates, map_privilege_type
from .config import Config, load_config
from .constrain import (
    ConstrainedNode,
    ContextCluster,
    GuardCondition,
    extract_descriptor,
    insert_guard,
    normalize_and_cluster,
    project_constraints,
    reorganize_script,
    synthesize_guard,
)
from .driver import (
    AgentDriver,
    ExecutionOutput,
    ExecutionTrace,
    GraphInterpreterDriver,
    build_unified_graph,
)
from .graph import (
    ActionNode,
    BidirectionalContext,
    Edge,
    PredicateNode,
    StructuralNode,
    UnifiedGraph,
    compose_graph,
    context_window,
    graph_from_json,
)
from .instr_graph import build_instruction_graph
from .code_graph import build_code_graph
from .oracle import (
    ConsistencyVerdict,
    RemoteOracle,
    RuleOracle,
    SemanticOracle,
    TranscriptOracle,
    make_oracle,
)
from .pipeline import PipelineResult, run_pipeline, run_pipeline_on_bundle
from .replay import (
    Ablation,
    OverprivilegeVerdict,
    ReplayRecord,
    apply_ablation,
    confirm_overprivilege,
    execute,
    make_replay_record,
)
from .report import AnalysisReport
from .sandbox import Sandbox
from .slots import TaskContextDescriptor, descriptor_from_prompt
from .stats import StratifiedSample, compute_stratified_validity
from .tasks import (
    ActionChain,
    ChainLimits,
    Fixture,
    FixtureProvider,
    LocalFixtureProvider,
    TaskInstance,
    enumerate_chains,
    instantiate_task,
)

__version__ = "0.1.0"
