"""Task-oriented flowchart toolkit.

Turns customer-service dialogue corpora into typed, cyclic task flowcharts
and operates on them: cost-minimal dialogue subset selection, iterative
chart construction, coverage evaluation (UMR/CPC), decentralized chart
merging, valid-path sampling for synthetic-data jobs, and flowchart-augmented
prompt assembly.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    Dialogue,
    IntentUniverse,
    Utterance,
    build_intent_universe,
    ingest_jsonl,
    normalize_intent,
    write_jsonl,
)
from .cover import (
    CoverInstance,
    CoverSolution,
    LpSolution,
    coverage_value,
    lp_round,
    solve_greedy,
    solve_ilp,
    solve_lp,
)
from .construction import (
    BuildTrace,
    OracleSuite,
    UtterancePair,
    build_flowchart,
    estimate_cost,
    pair_up,
)
from .evaluation import (
    CoverageReport,
    NodeAssignment,
    classify_by_oracle,
    classify_by_rules,
    coverage,
    dialogue_covered,
    umr,
)
from .flowchart import (
    Flowchart,
    FlowEdge,
    FlowNode,
    NodeType,
    isomorphic,
    make_flowchart,
    successors,
    validate,
)
from .merge import (
    MergeConfig,
    MergeResult,
    NodeCluster,
    NodePool,
    cluster_nodes,
    judge_coherence,
    merge_global,
    privacy_scan,
)
from .mermaid import load_flowchart, parse, save_flowchart, serialize
from .oracles import (
    BackendConfig,
    DEMO_LEXICONS,
    Lexicons,
    OracleRequest,
    RemoteBackend,
    RuleOracle,
    backend_suite,
    remote_complete,
    rule_suite,
)
from .paths import (
    GenerationJob,
    PathSample,
    TrainingSample,
    emit_generation_jobs,
    enumerate_paths,
    package_training_samples,
    sample_paths,
)
from .prompting import (
    NodeSchema,
    PromptBundle,
    compose_prompt,
    format_tracked_reply,
    load_schemas,
    parse_tracked_reply,
)
