"""Deterministic toolkit for two-dimensional pass-rate evaluation of
tool-using agents: a simulated retrieval environment, a synthetic policy zoo,
and the statistics that separate capability expansion from efficiency."""

from .corpus import (
    Paragraph,
    Problem,
    ProblemSet,
    build_expert_trajectory,
    load_problem_set,
    save_problem_set,
    verify_disjoint,
)
from .diagnostics import (
    bootstrap_boundary,
    budget_recommendation,
    delta_k,
    delta_t,
    fraction_ratio_grid,
    marginal_table,
    sampling_sufficiency,
    saturation,
)
from .environment import (
    Bm25Params,
    RewardConfig,
    build_index,
    exploration_rewards,
    run_episode,
    search_top1,
    task_reward,
)
from .errors import ConfigError, DataError, ToolkitError, TranscriptError
from .mechanism import (
    cross_policy_prompt,
    extract_hops,
    kl_k3,
    ppl_decompose,
    strategy_diversity,
)
from .metrics import (
    CapabilityReport,
    CapabilitySet,
    PassSurface,
    boundary_diff,
    capability_boundary,
    pass_at_k,
    per_problem_matrix,
    surface,
)
from .policies import (
    EvalGrid,
    PolicySpec,
    RolloutCell,
    RolloutGrid,
    build_policy,
    derive_seed,
    rollout_grid,
)
from .transcript import (
    Action,
    Span,
    Step,
    Trajectory,
    exact_match,
    normalize_answer,
    normalize_query,
    parse_transcript,
    query_sequence_key,
    render_transcript,
    segment_spans,
    truncate_trajectory,
)

__version__ = "0.1.0"
