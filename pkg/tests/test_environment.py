from __future__ import annotations

import math
import random

import pytest

from passgrid.corpus import Paragraph
from passgrid.environment import (
    BUDGET_EXHAUSTED_OBSERVATION,
    Bm25Params,
    RewardConfig,
    build_index,
    episode_step_cap,
    exploration_rewards,
    run_episode,
    search_top1,
    task_reward,
)
from passgrid.errors import ConfigError, DataError
from passgrid.policies import ScriptedBridgePolicy, TablePolicy
from passgrid.transcript import Action, Step, Trajectory


def paras(*texts: str) -> tuple[Paragraph, ...]:
    return tuple(
        Paragraph(index=i, title=f"Doc {i}", body=body, is_gold=False)
        for i, body in enumerate(texts)
    )


def reference_bm25(docs: list[list[str]], query: list[str], k1=1.5, b=0.75):
    """Textbook double-loop scorer, kept independent of the index class."""
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    scores = []
    for doc in docs:
        score = 0.0
        for term in query:
            tf = doc.count(term)
            if tf == 0:
                continue
            df = sum(1 for d in docs if term in d)
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(doc) / avgdl))
        scores.append(score)
    return scores


# ---------------------------------------------------------------------------
# index construction


def test_index_counts_documents():
    index = build_index(paras(*[f"body {i}" for i in range(10)]))
    assert index.size == 10


def test_index_token_counts_lowercased():
    index = build_index(paras("Cat cat DOG"))
    # document text is title + body
    assert index.term_freqs[0]["cat"] == 2
    assert index.term_freqs[0]["dog"] == 1


def test_identical_paragraphs_identical_statistics():
    corpus = tuple(
        Paragraph(index=i, title="Twin", body="same words here", is_gold=False)
        for i in range(2)
    )
    index = build_index(corpus)
    assert index.term_freqs[0] == index.term_freqs[1]
    assert index.doc_lens[0] == index.doc_lens[1]


def test_empty_corpus_rejected():
    with pytest.raises(DataError):
        build_index(())


def test_bad_params_rejected():
    with pytest.raises(ConfigError):
        Bm25Params(k1=0.0)
    with pytest.raises(ConfigError):
        Bm25Params(b=1.5)


# ---------------------------------------------------------------------------
# search


def test_search_prefers_matching_document():
    corpus = tuple(
        Paragraph(index=i, title=t, body=b, is_gold=False)
        for i, (t, b) in enumerate([("A", "cat sat"), ("B", "dog sat")])
    )
    index = build_index(corpus)
    hit = search_top1(index, "cat")
    assert hit.index == 0
    scores = reference_bm25(
        [["a", "cat", "sat"], ["b", "dog", "sat"]], ["cat"]
    )
    assert scores[0] > scores[1]


def test_search_tie_breaks_by_index():
    index = build_index(paras("twin body", "twin body"))
    assert search_top1(index, "twin").index == 0


def test_search_unknown_terms_falls_back_to_first():
    index = build_index(paras("alpha", "beta"))
    assert search_top1(index, "zzz qqq").index == 0


def test_search_matches_reference_on_random_corpora():
    rng = random.Random(1234)
    vocab = [f"w{i}" for i in range(18)]
    for _ in range(100):
        n_docs = rng.randint(2, 10)
        docs = [
            [rng.choice(vocab) for _ in range(rng.randint(1, 48))]
            for _ in range(n_docs)
        ]
        corpus = tuple(
            Paragraph(index=i, title=f"t{i}", body=" ".join(doc), is_gold=False)
            for i, doc in enumerate(docs)
        )
        index = build_index(corpus)
        query_tokens = [rng.choice(vocab) for _ in range(rng.randint(1, 5))]
        tokenized = [[f"t{i}"] + doc for i, doc in enumerate(docs)]
        expected = reference_bm25(tokenized, query_tokens)
        got = [index.score(query_tokens, d) for d in range(n_docs)]
        for e, g in zip(expected, got):
            assert abs(e - g) < 1e-9
        best = max(range(n_docs), key=lambda d: (expected[d], -d))
        assert search_top1(index, " ".join(query_tokens)).index == best


def test_identical_queries_identical_results(bridge_problem):
    index = build_index(bridge_problem.paragraphs)
    first = search_top1(index, "first hop")
    for _ in range(5):
        assert search_top1(index, "first hop") is first


# ---------------------------------------------------------------------------
# episode loop


class AnswerPolicy:
    policy_id = "answerer"

    def __init__(self, text: str):
        self.text = text

    def start(self, problem, budget_t, rng):
        outer = self

        class Driver:
            done = False

            def next_action(self, observation):
                if self.done:
                    return None
                self.done = True
                return Action("answer", outer.text)

        return Driver()


class GreedySearchPolicy:
    """Searches forever; answers only after seeing the budget notice."""

    policy_id = "greedy"

    def start(self, problem, budget_t, rng):
        class Driver:
            def next_action(self, observation):
                if observation == BUDGET_EXHAUSTED_OBSERVATION:
                    return Action("answer", "gave up")
                return Action("search", "first hop")

        return Driver()


class SilentPolicy:
    policy_id = "silent"

    def start(self, problem, budget_t, rng):
        class Driver:
            def next_action(self, observation):
                return Action("thought", "pondering")

        return Driver()


def test_budget_zero_immediate_gold_answer(bridge_problem):
    t = run_episode(AnswerPolicy(bridge_problem.gold_answer), bridge_problem, 0, 0)
    assert t.success is True
    assert t.n_searches == 0


def test_scripted_bridge_needs_two_rounds(bridge_problem):
    policy = ScriptedBridgePolicy("sb")
    assert run_episode(policy, bridge_problem, 1, 0).success is False
    assert run_episode(policy, bridge_problem, 2, 0).success is True
    deep = run_episode(policy, bridge_problem, 5, 0)
    assert deep.success is True and deep.n_searches == 2


def test_budget_exhaustion_not_recorded_as_search(bridge_problem):
    t = run_episode(GreedySearchPolicy(), bridge_problem, 1, 0)
    assert t.n_searches == 1
    assert t.final_answer == "gave up"
    assert all(
        s.observation != BUDGET_EXHAUSTED_OBSERVATION
        for s in t.steps
        if s.observation is not None
    )


def test_thought_loop_hits_step_cap(bridge_problem):
    t = run_episode(SilentPolicy(), bridge_problem, 1, 0)
    assert t.final_answer is None
    assert t.success is False
    assert len(t.steps) == episode_step_cap(1)


def test_reasoning_requires_budget_zero(reasoning_problem):
    t = run_episode(AnswerPolicy("4"), reasoning_problem, 0, 0)
    assert t.success is True
    with pytest.raises(ConfigError):
        run_episode(AnswerPolicy("4"), reasoning_problem, 2, 0)


def test_episode_determinism(bridge_problem):
    policy = TablePolicy("t", default_p=0.5)
    runs = [run_episode(policy, bridge_problem, 2, 99) for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]


def test_trajectory_valid_and_same_score_at_larger_budget(bridge_problem):
    import dataclasses

    t = run_episode(ScriptedBridgePolicy("sb"), bridge_problem, 2, 0)
    widened = dataclasses.replace(t, budget_t=5)
    assert widened.success == t.success
    assert widened.steps == t.steps


# ---------------------------------------------------------------------------
# rewards


def _traj_with_titles(titles, success, pid="p"):
    steps = [
        Step(Action("search", f"q{i}"), f"{title} | body")
        for i, title in enumerate(titles)
    ]
    steps.append(Step(Action("answer", "a" if success else "b")))
    return Trajectory(
        problem_id=pid,
        policy_id="x",
        budget_t=len(titles),
        sample_index=0,
        seed=0,
        steps=tuple(steps),
        success=success,
    )


def test_task_reward(bridge_problem):
    policy = ScriptedBridgePolicy("sb")
    good = run_episode(policy, bridge_problem, 2, 0)
    bad = run_episode(policy, bridge_problem, 1, 0)
    assert task_reward(good, bridge_problem) == 1
    assert task_reward(bad, bridge_problem) == 0


def test_task_reward_normalizes(bridge_problem):
    t = run_episode(
        AnswerPolicy("The " + bridge_problem.gold_answer + "."), bridge_problem, 0, 0
    )
    assert task_reward(t, bridge_problem) == 1


def test_exploration_duplicate_sets_get_no_bonus():
    batch = [_traj_with_titles(["A", "B"], False), _traj_with_titles(["B", "A"], False)]
    rewards = exploration_rewards(batch, RewardConfig(lam=0.1))
    assert rewards == [0.0, 0.0]


def test_exploration_distinct_sets_get_bonus():
    batch = [_traj_with_titles(["A", "B"], False), _traj_with_titles(["A", "C"], False)]
    rewards = exploration_rewards(batch, RewardConfig(lam=0.1))
    assert rewards == [0.1, 0.1]


def test_exploration_successful_unique_trajectory():
    batch = [_traj_with_titles(["A", "B"], True), _traj_with_titles(["A", "C"], False)]
    rewards = exploration_rewards(batch, RewardConfig(lam=0.1))
    assert rewards[0] == pytest.approx(1.1)


def test_exploration_disabled():
    batch = [_traj_with_titles(["A", "B"], True)]
    rewards = exploration_rewards(
        batch, RewardConfig(lam=0.1, exploration_enabled=False)
    )
    assert rewards == [1.0]


def test_exploration_empty_batch_rejected():
    with pytest.raises(DataError):
        exploration_rewards([])
