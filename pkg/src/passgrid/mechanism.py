"""Mechanism analytics: strategy diversity, span-level perplexity
aggregation from externally supplied token NLLs, retrieval-context prompt
construction, and the exp(d) - d - 1 KL estimator."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from .corpus import Problem
from .errors import DataError
from .transcript import Trajectory, query_sequence_key

NLL_ROLES = ("search", "reason")


@dataclass
class DiversityReport:
    """Unique query-sequence counts per problem, their mean/median, and the
    share of subject sequences unseen in the reference policy's rollouts."""

    per_problem: dict[str, int]
    mean: float
    median: float
    novelty_fraction: float | None = None


def _group_by_problem(trajectories: list[Trajectory]) -> dict[str, list[Trajectory]]:
    groups: dict[str, list[Trajectory]] = {}
    for t in trajectories:
        groups.setdefault(t.problem_id, []).append(t)
    return groups


def strategy_diversity(
    trajectories: list[Trajectory],
    reference: list[Trajectory] | None = None,
) -> DiversityReport:
    """Count distinct normalized query sequences per problem.

    With a reference set, also reports the novelty fraction: per problem, the
    share of the subject's distinct sequences absent from the reference's
    sequences for the same problem, averaged over problems with equal weight.
    """
    if not trajectories:
        raise DataError("strategy diversity requires at least one trajectory")
    groups = _group_by_problem(trajectories)
    keys = {
        pid: {query_sequence_key(t) for t in group}
        for pid, group in groups.items()
    }
    per_problem = {pid: len(ks) for pid, ks in sorted(keys.items())}
    counts = list(per_problem.values())
    novelty: float | None = None
    if reference is not None:
        ref_keys = {
            pid: {query_sequence_key(t) for t in group}
            for pid, group in _group_by_problem(reference).items()
        }
        fractions = []
        for pid, subject_keys in sorted(keys.items()):
            seen = ref_keys.get(pid, set())
            novel = sum(1 for key in subject_keys if key not in seen)
            fractions.append(novel / len(subject_keys))
        novelty = sum(fractions) / len(fractions)
    return DiversityReport(
        per_problem=per_problem,
        mean=statistics.mean(counts),
        median=statistics.median(counts),
        novelty_fraction=novelty,
    )


@dataclass
class TokenNllRecord:
    """Per-trajectory token negative log-likelihoods (nats), one list per
    span, keyed by span role. Observation spans carry no NLLs: those tokens
    are environment output, not policy choices."""

    trajectory_id: str
    spans: dict[str, list[list[float]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for role, span_lists in self.spans.items():
            if role == "observation" and any(span_lists):
                raise DataError(
                    f"record {self.trajectory_id!r}: observation spans must not "
                    "carry NLLs"
                )
            if role not in NLL_ROLES and role != "observation":
                raise DataError(
                    f"record {self.trajectory_id!r}: unknown span role {role!r}"
                )
            for span in span_lists:
                if any(x < 0 for x in span):
                    raise DataError(
                        f"record {self.trajectory_id!r}: negative NLL in {role} span"
                    )


@dataclass
class PplReport:
    """Pooled per-class surprisal and perplexity; a class with no tokens is
    reported absent (None), never as zero."""

    ppl_search: float | None
    ppl_reason: float | None
    surprisal_search: float | None
    surprisal_reason: float | None
    tokens_search: int = 0
    tokens_reason: int = 0


def ppl_decompose(records: list[TokenNllRecord]) -> PplReport:
    """Pool token NLLs across records by span class and exponentiate.

    The pooled mean (one average over all tokens of a class, not a mean of
    per-trajectory perplexities) is what ties the per-token surprisal and the
    reported perplexity together as ppl = exp(surprisal).
    """
    pooled: dict[str, list[float]] = {role: [] for role in NLL_ROLES}
    for record in records:
        for role in NLL_ROLES:
            for span in record.spans.get(role, []):
                pooled[role].extend(span)
    out: dict[str, float | None] = {}
    tokens: dict[str, int] = {}
    for role in NLL_ROLES:
        values = pooled[role]
        tokens[role] = len(values)
        if values:
            mean_nll = sum(values) / len(values)
            out[f"surprisal_{role}"] = mean_nll
            out[f"ppl_{role}"] = math.exp(mean_nll)
        else:
            out[f"surprisal_{role}"] = None
            out[f"ppl_{role}"] = None
    return PplReport(
        ppl_search=out["ppl_search"],
        ppl_reason=out["ppl_reason"],
        surprisal_search=out["surprisal_search"],
        surprisal_reason=out["surprisal_reason"],
        tokens_search=tokens["search"],
        tokens_reason=tokens["reason"],
    )


def extract_hops(trajectory: Trajectory) -> list[tuple[str, str]]:
    """The ordered (query, observation) pairs of a trajectory, reasoning
    stripped."""
    hops = []
    for step in trajectory.steps:
        if step.action.kind == "search":
            if step.observation is None:
                raise DataError("search step without observation")
            hops.append((step.action.text, step.observation))
    return hops


def cross_policy_prompt(problem: Problem, hops: list[tuple[str, str]]) -> str:
    """Render a fixed retrieval context as a standalone answering prompt.

    Deterministic and byte-stable: the same problem and hops always produce
    the same text, so downstream answer generation is attributable to the
    reasoning side alone.
    """
    if not hops:
        raise DataError("cross-policy prompt requires at least one hop")
    lines = [
        "You are given a question and the results of several searches.",
        "Based on the search results, answer the question concisely.",
        "",
        f"Question: {problem.question}",
        "",
    ]
    for i, (query, observation) in enumerate(hops, start=1):
        lines.append(f'Search {i} (query: "{query}"):')
        lines.append(observation)
        lines.append("")
    lines.append("Based on the above search results, provide a concise answer.")
    lines.append("Answer:")
    return "\n".join(lines)


def kl_k3(
    logp_ref: list[float], logp_new: list[float], clamp_max: float = 10.0
) -> tuple[float, float]:
    """Per-token KL estimate exp(d) - d - 1 with d = logp_ref - logp_new.

    Values are clamped above at ``clamp_max`` nats per token and floored at
    zero (the estimator is non-negative by construction; the floor only
    absorbs float dust near d = 0). Returns (per-token mean, total).
    """
    if len(logp_ref) != len(logp_new):
        raise ValueError(
            f"length mismatch: {len(logp_ref)} reference vs {len(logp_new)} new"
        )
    if not logp_ref:
        raise ValueError("kl_k3 requires at least one token")
    values = []
    for ref, new in zip(logp_ref, logp_new):
        d = ref - new
        if d > 700.0:  # exp would overflow; the clamp applies regardless
            value = clamp_max
        else:
            value = min(math.exp(d) - d - 1.0, clamp_max)
        values.append(max(0.0, value))
    total = sum(values)
    return total / len(values), total
