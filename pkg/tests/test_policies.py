from __future__ import annotations

import math
import random

import pytest

from passgrid.corpus import ProblemSet
from passgrid.environment import run_episode
from passgrid.errors import ConfigError
from passgrid.fixtures import generate_problem_sets
from passgrid.policies import (
    CollapsedPolicy,
    EvalGrid,
    MixturePolicy,
    PolicySpec,
    TablePolicy,
    build_policy,
    derive_seed,
    fnv1a_64,
    rollout_grid,
)
from passgrid.transcript import query_sequence_key

# Frozen once from an independent FNV-1a implementation; guards the seed
# derivation against accidental change, which would silently reshuffle every
# rollout in every downstream artifact.
DERIVE_SEED_GOLDEN = 325083152920082837


# ---------------------------------------------------------------------------
# seed derivation


def test_derive_seed_golden_vector():
    assert derive_seed(42, "p0", 0, 0) == DERIVE_SEED_GOLDEN


def test_derive_seed_stable_across_calls():
    assert derive_seed(7, "abc", 3, 12) == derive_seed(7, "abc", 3, 12)


def test_derive_seed_distinct_over_sample_indexes():
    seeds = {derive_seed(42, f"p{i % 10}", i % 5, i) for i in range(10_000)}
    assert len(seeds) == 10_000


def test_fnv_empty_input_is_offset_basis():
    assert fnv1a_64(b"") == 0xCBF29CE484222325


# ---------------------------------------------------------------------------
# grid validation


def test_eval_grid_defaults():
    grid = EvalGrid()
    assert grid.ks == (1, 2, 4, 8, 16, 32, 64)
    assert grid.ts == (0, 1, 2, 3, 5)
    assert grid.n == 64


def test_eval_grid_rejects_k_above_n():
    with pytest.raises(ConfigError):
        EvalGrid(ks=(1, 128), ts=(0,), n=64)


def test_eval_grid_rejects_unsorted_ts():
    with pytest.raises(ConfigError):
        EvalGrid(ks=(1,), ts=(2, 1), n=4)


# ---------------------------------------------------------------------------
# table policy


def test_table_policy_extremes(bridge_set):
    grid = EvalGrid(ks=(1, 2), ts=(0, 1), n=8)
    sure = PolicySpec.from_dict({"id": "one", "kind": "table", "default_p": 1.0})
    never = PolicySpec.from_dict({"id": "zero", "kind": "table", "default_p": 0.0})
    grid_one = rollout_grid(sure, bridge_set, grid, 42)
    grid_zero = rollout_grid(never, bridge_set, grid, 42)
    assert all(c.successes == c.n for c in grid_one.cells.values())
    assert all(c.successes == 0 for c in grid_zero.cells.values())


def test_table_policy_calibration(bridge_set):
    # grand mean of c/n over many cells concentrates around p
    p = 0.3
    spec = PolicySpec.from_dict({"id": "t", "kind": "table", "default_p": p})
    problems = generate_problem_sets(0, 0, 40, seed=5)["bridge"]
    grid = rollout_grid(
        spec, problems, EvalGrid(ks=(1,), ts=(0, 1), n=64), 42,
        store_trajectories=False,
    )
    cells = list(grid.cells.values())
    mean = sum(c.successes / c.n for c in cells) / len(cells)
    bound = 3 * math.sqrt(p * (1 - p) / (64 * len(cells)))
    assert abs(mean - p) < bound


def test_table_policy_requires_probability():
    policy = TablePolicy("t", default_p=None, overrides={})
    with pytest.raises(ConfigError):
        policy.p("nope", 0)


def test_table_policy_override_lookup():
    policy = TablePolicy("t", default_p=0.1, overrides={("p1", 2): 0.9})
    assert policy.p("p1", 2) == 0.9
    assert policy.p("p1", 3) == 0.1


# ---------------------------------------------------------------------------
# collapsed policy


def _collapsed_keys(policy, problem, n, run_seed=0):
    keys = set()
    for i in range(n):
        seed = derive_seed(run_seed, problem.id, 2, i)
        trajectory = run_episode(policy, problem, 2, seed, sample_index=i)
        keys.add(query_sequence_key(trajectory))
    return keys


def test_collapsed_pool_of_one(bridge_set):
    policy = CollapsedPolicy("c", pool_size=1)
    assert len(_collapsed_keys(policy, bridge_set.problems[0], 64)) == 1


def test_collapsed_unique_count_bounded_by_pool(bridge_set):
    policy = CollapsedPolicy("c", pool_size=10)
    assert len(_collapsed_keys(policy, bridge_set.problems[0], 64)) <= 10


def test_collapsed_occupancy_expectation():
    # E[unique of 64 uniform draws from 64] = 64 * (1 - (63/64)^64) ~= 40.6
    policy = CollapsedPolicy("c", pool_size=64)
    problems = generate_problem_sets(0, 0, 60, seed=3)["bridge"]
    counts = [
        len(_collapsed_keys(policy, problem, 64, run_seed=9))
        for problem in problems.problems
    ]
    expected = 64 * (1 - (63 / 64) ** 64)
    assert abs(sum(counts) / len(counts) - expected) < 1.5


def test_collapsed_empty_pool_rejected(bridge_set):
    policy = CollapsedPolicy("c", pool_size=0)
    with pytest.raises(ConfigError):
        run_episode(policy, bridge_set.problems[0], 2, 0)


def test_collapsed_explicit_pools(bridge_set):
    problem = bridge_set.problems[0]
    policy = CollapsedPolicy(
        "c", pools={problem.id: [["only query", "second query"]]}
    )
    keys = _collapsed_keys(policy, problem, 16)
    assert keys == {("only query", "second query")}


# ---------------------------------------------------------------------------
# mixture policy


def test_mixture_weights_validated():
    with pytest.raises(ConfigError):
        MixturePolicy("m", components=[TablePolicy("a", 1.0)], weights=[0.5])


def test_mixture_component_selection(bridge_set):
    spec = PolicySpec.from_dict(
        {
            "id": "mix",
            "kind": "mixture",
            "components": [
                {"id": "always", "kind": "table", "default_p": 1.0},
                {"id": "never", "kind": "table", "default_p": 0.0},
            ],
            "weights": [0.75, 0.25],
        }
    )
    problems = generate_problem_sets(0, 0, 30, seed=8)["bridge"]
    grid = rollout_grid(
        spec, problems, EvalGrid(ks=(1,), ts=(1,), n=64), 1,
        store_trajectories=False,
    )
    cells = list(grid.cells.values())
    mean = sum(c.successes / c.n for c in cells) / len(cells)
    bound = 3 * math.sqrt(0.75 * 0.25 / (64 * len(cells)))
    assert abs(mean - 0.75) < bound


# ---------------------------------------------------------------------------
# rollout reproducibility and modes


def test_rollout_reproducible_and_worker_independent(bridge_set):
    spec = PolicySpec.from_dict({"id": "sb", "kind": "scripted_bridge"})
    grid = EvalGrid(ks=(1, 2, 4), ts=(0, 1, 2), n=8)
    a = rollout_grid(spec, bridge_set, grid, 42)
    b = rollout_grid(spec, bridge_set, grid, 42)
    c = rollout_grid(spec, bridge_set, grid, 42, workers=2)
    assert a.cells == b.cells == c.cells


def test_rollout_rejects_reasoning_with_positive_ts():
    problems = generate_problem_sets(2, 0, 0, seed=1)["reasoning"]
    spec = PolicySpec.from_dict({"id": "t", "kind": "table", "default_p": 0.5})
    with pytest.raises(ConfigError):
        rollout_grid(spec, problems, EvalGrid(ks=(1,), ts=(0, 1), n=4), 0)
    grid = rollout_grid(spec, problems, EvalGrid(ks=(1,), ts=(0,), n=4), 0)
    assert len(grid.cells) == 2


def test_nested_mode_per_sample_monotone(bridge_set):
    spec = PolicySpec.from_dict(
        {
            "id": "t",
            "kind": "table",
            "default_p": 0.2,
            "table": {p.id: {"0": 0.1, "1": 0.4, "2": 0.8} for p in (bridge_set.problems)},
        }
    )
    grid = rollout_grid(
        spec, bridge_set, EvalGrid(ks=(1,), ts=(0, 1, 2), n=32, mode="nested"), 7
    )
    for problem in bridge_set.problems:
        for i in range(32):
            successes = [
                grid.cell(problem.id, t).trajectories[i].success for t in (0, 1, 2)
            ]
            for earlier, later in zip(successes, successes[1:]):
                assert (not earlier) or later


def test_nested_mode_marginals_match_table(bridge_set):
    problems = generate_problem_sets(0, 0, 50, seed=2)["bridge"]
    spec = PolicySpec.from_dict(
        {"id": "t", "kind": "table", "default_p": 0.0,
         "table": {p.id: {"0": 0.1, "1": 0.5, "2": 0.7} for p in problems.problems}}
    )
    grid = rollout_grid(
        spec, problems, EvalGrid(ks=(1,), ts=(0, 1, 2), n=64, mode="nested"), 13,
        store_trajectories=False,
    )
    for t, p in ((0, 0.1), (1, 0.5), (2, 0.7)):
        cells = [grid.cell(pr.id, t) for pr in problems.problems]
        mean = sum(c.successes / c.n for c in cells) / len(cells)
        bound = 3 * math.sqrt(p * (1 - p) / (64 * len(cells)))
        assert abs(mean - p) < bound


def test_nested_mode_rejects_non_monotone_table(bridge_set):
    spec = PolicySpec.from_dict(
        {
            "id": "t",
            "kind": "table",
            "default_p": 0.5,
            "table": {bridge_set.problems[0].id: {"0": 0.9, "1": 0.1}},
        }
    )
    with pytest.raises(ConfigError, match="truncation-consistent"):
        rollout_grid(
            spec, bridge_set, EvalGrid(ks=(1,), ts=(0, 1), n=4, mode="nested"), 0
        )


def test_rollout_cell_counts(bridge_set):
    spec = PolicySpec.from_dict({"id": "sb", "kind": "scripted_bridge"})
    grid = rollout_grid(spec, bridge_set, EvalGrid(ks=(1,), ts=(1, 2), n=4), 0)
    assert len(grid.cells) == len(bridge_set.problems) * 2
    for (pid, t), cell in grid.cells.items():
        assert cell.successes == (4 if t >= 2 else 0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        PolicySpec.from_dict({"id": "x", "kind": "nope"})
    with pytest.raises(ConfigError):
        PolicySpec.from_dict({"kind": "table"})
    with pytest.raises(ConfigError):
        build_policy(
            PolicySpec.from_dict({"id": "x", "kind": "table", "default_p": 1.5})
        )
