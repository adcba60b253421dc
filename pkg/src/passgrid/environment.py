"""Deterministic retrieval environment: BM25 over a problem's paragraphs,
the episode loop with budget enforcement, and reward computation."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Protocol

from .corpus import Paragraph, Problem
from .errors import ConfigError, DataError
from .transcript import Action, Step, Trajectory, exact_match, format_observation

# Injected as the environment's reply when the agent tries to search past its
# budget; the exchange is part of the conversation, not of the saved
# trajectory, so recorded search counts never exceed the budget.
BUDGET_EXHAUSTED_OBSERVATION = "BUDGET EXHAUSTED | answer now"


def episode_step_cap(budget_t: int) -> int:
    """Hard cap on policy emissions per episode; guarantees termination even
    for policies that loop on thoughts."""
    return 2 * budget_t + 4


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self) -> None:
        if not self.k1 > 0:
            raise ConfigError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError("b must be in [0, 1]")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens; no stemming, no punctuation handling."""
    return text.lower().split()


class Bm25Index:
    """Immutable BM25 statistics over one problem's paragraph list.

    Each document is the paragraph title concatenated with its body. The idf
    is the non-negative variant ln((N - df + 0.5) / (df + 0.5) + 1).
    """

    def __init__(self, paragraphs: tuple[Paragraph, ...], params: Bm25Params):
        if not paragraphs:
            raise DataError("cannot build an index over an empty corpus")
        self.paragraphs = tuple(paragraphs)
        self.params = params
        self.term_freqs: list[Counter[str]] = []
        self.doc_lens: list[int] = []
        doc_freq: Counter[str] = Counter()
        for p in self.paragraphs:
            tokens = tokenize(f"{p.title} {p.body}")
            freqs = Counter(tokens)
            self.term_freqs.append(freqs)
            self.doc_lens.append(len(tokens))
            doc_freq.update(freqs.keys())
        self.doc_freq: dict[str, int] = dict(doc_freq)
        self.size = len(self.paragraphs)
        self.avgdl = sum(self.doc_lens) / self.size

    def _idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log((self.size - df + 0.5) / (df + 0.5) + 1.0)

    def score(self, query_tokens: list[str], doc: int) -> float:
        freqs = self.term_freqs[doc]
        k1, b = self.params.k1, self.params.b
        norm = k1 * (1.0 - b + b * self.doc_lens[doc] / self.avgdl)
        total = 0.0
        for term in query_tokens:
            tf = freqs.get(term, 0)
            if tf == 0:
                continue
            total += self._idf(term) * tf * (k1 + 1.0) / (tf + norm)
        return total


def build_index(
    paragraphs: tuple[Paragraph, ...] | list[Paragraph],
    params: Bm25Params | None = None,
) -> Bm25Index:
    return Bm25Index(tuple(paragraphs), params or Bm25Params())


def search_top1(index: Bm25Index, query: str) -> Paragraph:
    """The highest-scoring paragraph; ties (including all-zero scores) go to
    the smallest paragraph index."""
    tokens = tokenize(query)
    best = index.paragraphs[0]
    best_score = index.score(tokens, 0)
    for doc in range(1, index.size):
        score = index.score(tokens, doc)
        p = index.paragraphs[doc]
        if score > best_score or (score == best_score and p.index < best.index):
            best, best_score = p, score
    return best


class PolicyDriver(Protocol):
    """Per-episode stateful view of a policy."""

    def next_action(self, observation: str | None) -> Action | None:
        """Produce the next action; ``observation`` carries the environment's
        reply to the previous action (None when there is none)."""
        ...


class Policy(Protocol):
    policy_id: str

    def start(
        self, problem: Problem, budget_t: int, rng: random.Random
    ) -> PolicyDriver: ...


def run_episode(
    policy: Policy,
    problem: Problem,
    budget_t: int,
    rng_seed: int,
    *,
    index: Bm25Index | None = None,
    sample_index: int = 0,
) -> Trajectory:
    """Run one episode of ``policy`` on ``problem`` with at most ``budget_t``
    search rounds.

    Only searches count against the budget. Attempts to search past it are
    answered with a budget-exhausted notice and left out of the trajectory;
    from then on only a final answer is accepted. The episode also ends when
    the policy answers, stops emitting, or hits the hard step cap.
    """
    if budget_t < 0:
        raise ConfigError("budget_t must be >= 0")
    if problem.category == "reasoning" and budget_t != 0:
        raise ConfigError(
            f"problem {problem.id!r} is tool-free; budget_t must be 0, got {budget_t}"
        )
    if index is None and problem.paragraphs:
        index = build_index(problem.paragraphs)

    rng = random.Random(rng_seed)
    driver = policy.start(problem, budget_t, rng)
    steps: list[Step] = []
    searches = 0
    answer: str | None = None
    pending_obs: str | None = None
    answer_only = False
    for _ in range(episode_step_cap(budget_t)):
        action = driver.next_action(pending_obs)
        pending_obs = None
        if action is None:
            break
        if action.kind == "answer":
            steps.append(Step(action))
            answer = action.text
            break
        if answer_only:
            pending_obs = BUDGET_EXHAUSTED_OBSERVATION
            continue
        if action.kind == "thought":
            steps.append(Step(action))
            continue
        # search
        if searches >= budget_t:
            answer_only = True
            pending_obs = BUDGET_EXHAUSTED_OBSERVATION
            continue
        if index is None:
            raise ConfigError(
                f"problem {problem.id!r} has no paragraphs to search"
            )
        paragraph = search_top1(index, action.text)
        obs = format_observation(paragraph.title, paragraph.body)
        steps.append(Step(action, obs))
        searches += 1
        pending_obs = obs

    success = answer is not None and exact_match(answer, problem.gold_answer)
    return Trajectory(
        problem_id=problem.id,
        policy_id=policy.policy_id,
        budget_t=budget_t,
        sample_index=sample_index,
        seed=rng_seed,
        steps=tuple(steps),
        success=success,
    )


def task_reward(trajectory: Trajectory, problem: Problem) -> int:
    """Binary exact-match reward: 1 iff the final answer matches gold."""
    answer = trajectory.final_answer
    if answer is None:
        return 0
    return int(exact_match(answer, problem.gold_answer))


@dataclass(frozen=True)
class RewardConfig:
    lam: float = 0.1
    exploration_enabled: bool = True

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")


def retrieved_title_set(trajectory: Trajectory) -> frozenset[str]:
    """The deduplicated set of paragraph titles retrieved by a trajectory."""
    titles = []
    for step in trajectory.steps:
        if step.action.kind == "search" and step.observation is not None:
            titles.append(step.observation.split(" | ", 1)[0])
    return frozenset(titles)


def exploration_rewards(
    batch: list[Trajectory], config: RewardConfig | None = None
) -> list[float]:
    """Augmented rewards for a batch: task reward plus a novelty bonus.

    A trajectory earns the bonus iff its retrieved-title set occurs in no
    other trajectory of the batch.
    """
    if not batch:
        raise DataError("exploration rewards require a non-empty batch")
    config = config or RewardConfig()
    title_sets = [retrieved_title_set(t) for t in batch]
    counts = Counter(title_sets)
    rewards = []
    for trajectory, titles in zip(batch, title_sets):
        reward = 1.0 if trajectory.success else 0.0
        if config.exploration_enabled and counts[titles] == 1:
            reward += config.lam
        rewards.append(reward)
    return rewards
