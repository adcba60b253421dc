"""Synthetic policy zoo and the rollout engine.

Every policy here is LLM-free with known ground-truth behavior, so the
statistics computed downstream can be checked against closed forms. The
rollout engine produces per-(problem, T) success counts over n samples,
seeded per sample so any execution schedule reproduces the same grid.
"""

from __future__ import annotations

import random
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Generator

from .corpus import Problem, ProblemSet, build_expert_trajectory
from .environment import Bm25Index, build_index, run_episode
from .errors import ConfigError, DataError
from .transcript import Action, Trajectory, truncate_trajectory

POLICY_KINDS = (
    "table",
    "scripted_bridge",
    "scripted_comparison",
    "expert_replay",
    "collapsed",
    "mixture",
)

WRONG_ANSWER = "WRONG"

# Fixture paragraph markers the scripted policies read their moves from.
BRIDGE_MARKER_RE = re.compile(r"BRIDGE=([^;]+);")
ANSWER_MARKER_RE = re.compile(r"ANSWER=([^;]+);")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * _FNV_PRIME) & _FNV_MASK
    return value


def derive_seed(run_seed: int, problem_id: str, t: int, sample_index: int) -> int:
    """Stable 64-bit per-sample seed: FNV-1a over "run_seed|problem_id|T|i".

    Platform-independent and injective at test scales, so every rollout
    sample owns its own reproducible random stream.
    """
    key = f"{run_seed}|{problem_id}|{t}|{sample_index}"
    return fnv1a_64(key.encode("utf-8"))


@dataclass(frozen=True)
class EvalGrid:
    """The (k, T) evaluation grid and per-cell sample count."""

    ks: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64)
    ts: tuple[int, ...] = (0, 1, 2, 3, 5)
    n: int = 64
    mode: str = "independent"

    def __post_init__(self) -> None:
        object.__setattr__(self, "ks", tuple(self.ks))
        object.__setattr__(self, "ts", tuple(self.ts))
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError("ks must be a non-empty list of integers >= 1")
        if list(self.ks) != sorted(set(self.ks)):
            raise ConfigError("ks must be strictly increasing")
        if not self.ts or any(t < 0 for t in self.ts):
            raise ConfigError("ts must be a non-empty list of integers >= 0")
        if list(self.ts) != sorted(set(self.ts)):
            raise ConfigError("ts must be strictly increasing")
        if max(self.ks) > self.n:
            raise ConfigError(f"max k ({max(self.ks)}) exceeds n ({self.n})")
        if self.mode not in ("independent", "nested"):
            raise ConfigError(f"unknown rollout mode {self.mode!r}")


@dataclass
class RolloutCell:
    """Success count for one (problem, T) pair over n samples."""

    problem_id: str
    t: int
    n: int
    successes: int
    trajectories: tuple[Trajectory, ...] | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.n:
            raise DataError(
                f"cell ({self.problem_id!r}, T={self.t}): "
                f"successes {self.successes} outside [0, {self.n}]"
            )
        if self.trajectories is not None:
            observed = sum(1 for t in self.trajectories if t.success)
            if len(self.trajectories) != self.n or observed != self.successes:
                raise DataError(
                    f"cell ({self.problem_id!r}, T={self.t}): stored trajectories "
                    "disagree with the recorded count"
                )


@dataclass
class RolloutGrid:
    policy_id: str
    cells: dict[tuple[str, int], RolloutCell]
    grid: EvalGrid
    run_seed: int

    def cell(self, problem_id: str, t: int) -> RolloutCell:
        key = (problem_id, t)
        if key not in self.cells:
            raise DataError(f"missing rollout cell ({problem_id!r}, T={t})")
        return self.cells[key]

    def problem_ids(self) -> tuple[str, ...]:
        seen: list[str] = []
        for pid, _ in self.cells:
            if pid not in seen:
                seen.append(pid)
        return tuple(seen)

    def ts_present(self) -> tuple[int, ...]:
        return tuple(sorted({t for _, t in self.cells}))

    @classmethod
    def from_counts(
        cls,
        policy_id: str,
        counts: dict[tuple[str, int], tuple[int, int]],
        grid: EvalGrid,
        run_seed: int = 0,
    ) -> "RolloutGrid":
        cells = {
            (pid, t): RolloutCell(pid, t, n, c)
            for (pid, t), (n, c) in counts.items()
        }
        return cls(policy_id=policy_id, cells=cells, grid=grid, run_seed=run_seed)


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy description; the JSON form used by manifests."""

    id: str
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ConfigError("policy id must be non-empty")
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "PolicySpec":
        if "id" not in obj or "kind" not in obj:
            raise ConfigError("policy spec needs 'id' and 'kind' fields")
        params = {k: v for k, v in obj.items() if k not in ("id", "kind")}
        return cls(id=str(obj["id"]), kind=str(obj["kind"]), params=params)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind, **self.params}


class _GenDriver:
    """Adapts a generator of actions to the environment's driver protocol."""

    def __init__(self, gen: Generator[Action, str | None, None]):
        self._gen = gen
        self._started = False

    def next_action(self, observation: str | None) -> Action | None:
        try:
            if not self._started:
                self._started = True
                return next(self._gen)
            return self._gen.send(observation)
        except StopIteration:
            return None


def _distinct_support_titles(problem: Problem) -> list[str]:
    return list(dict.fromkeys(t for t, _ in problem.supporting_facts))


@dataclass
class TablePolicy:
    """Succeeds with configured probability p(problem, T); trajectories are
    minimal (searches "q1".."qT", then the gold answer or WRONG).

    With ``nested_ts`` set, the answer is placed after the earliest grid
    depth whose p already covers the episode's uniform draw, which makes
    truncation to a shallower depth re-score correctly. That placement is
    only sound for p non-decreasing in T; the rollout engine validates this
    before nested runs.
    """

    policy_id: str
    default_p: float | None = None
    overrides: dict[tuple[str, int], float] = field(default_factory=dict)
    nested_ts: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        for p in list(self.overrides.values()) + (
            [self.default_p] if self.default_p is not None else []
        ):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"table probability {p} outside [0, 1]")

    def p(self, problem_id: str, t: int) -> float:
        value = self.overrides.get((problem_id, t), self.default_p)
        if value is None:
            raise ConfigError(
                f"table policy {self.policy_id!r} has no probability for "
                f"({problem_id!r}, T={t}) and no default"
            )
        return value

    def _run(
        self, problem: Problem, budget_t: int, rng: random.Random
    ) -> Generator[Action, str | None, None]:
        draw = rng.random()
        if self.nested_ts is not None:
            answer_round = None
            for t in self.nested_ts:
                if t <= budget_t and draw < self.p(problem.id, t):
                    answer_round = t
                    break
            success = answer_round is not None
            rounds = answer_round if success else budget_t
        else:
            success = draw < self.p(problem.id, budget_t)
            rounds = budget_t
        for i in range(rounds):
            yield Action("search", f"q{i + 1}")
        yield Action("answer", problem.gold_answer if success else WRONG_ANSWER)

    def start(self, problem: Problem, budget_t: int, rng: random.Random):
        return _GenDriver(self._run(problem, budget_t, rng))


@dataclass
class ScriptedBridgePolicy:
    """Deterministic two-hop solver for bridge fixtures.

    Hop one searches the first supporting-fact title and reads the bridge
    marker from the observation; hop two searches the marked entity and
    reads the answer marker. With budget below two rounds, or with markers
    missing, it answers a designated wrong string instead of crashing.
    """

    policy_id: str

    def _run(
        self, problem: Problem, budget_t: int, rng: random.Random
    ) -> Generator[Action, str | None, None]:
        titles = _distinct_support_titles(problem)
        if budget_t < 1 or not titles:
            yield Action("thought", "The budget is too small for a two-hop chain.")
            yield Action("answer", WRONG_ANSWER)
            return
        yield Action(
            "thought", f"Starting from {titles[0]} to locate the bridge entity."
        )
        obs = yield Action("search", titles[0])
        marker = BRIDGE_MARKER_RE.search(obs or "")
        if marker is None or budget_t < 2:
            yield Action("answer", WRONG_ANSWER)
            return
        entity = marker.group(1)
        yield Action("thought", f"The bridge points to {entity}; searching it next.")
        obs2 = yield Action("search", entity)
        answer = ANSWER_MARKER_RE.search(obs2 or "")
        yield Action("thought", "Reading the answer off the second paragraph.")
        yield Action("answer", answer.group(1) if answer else WRONG_ANSWER)

    def start(self, problem: Problem, budget_t: int, rng: random.Random):
        return _GenDriver(self._run(problem, budget_t, rng))


@dataclass
class ScriptedComparisonPolicy:
    """Deterministic two-independent-hop solver for comparison fixtures.

    Searches both supporting-fact titles from the question alone and answers
    the shared answer marker when both observations agree on one."""

    policy_id: str

    def _run(
        self, problem: Problem, budget_t: int, rng: random.Random
    ) -> Generator[Action, str | None, None]:
        titles = _distinct_support_titles(problem)
        if budget_t < len(titles) or not titles:
            yield Action("thought", "Not enough budget to look at both subjects.")
            yield Action("answer", WRONG_ANSWER)
            return
        markers: list[str | None] = []
        for i, title in enumerate(titles):
            yield Action("thought", f"Looking up {title}.")
            obs = yield Action("search", title)
            found = ANSWER_MARKER_RE.search(obs or "")
            markers.append(found.group(1) if found else None)
        yield Action("thought", "Comparing the two paragraphs.")
        values = set(markers)
        if None in values or len(values) != 1:
            yield Action("answer", WRONG_ANSWER)
        else:
            yield Action("answer", markers[0])

    def start(self, problem: Problem, budget_t: int, rng: random.Random):
        return _GenDriver(self._run(problem, budget_t, rng))


@dataclass
class ExpertReplayPolicy:
    """Replays the annotation-built expert trajectory action for action."""

    policy_id: str

    def _run(
        self, problem: Problem, budget_t: int, rng: random.Random
    ) -> Generator[Action, str | None, None]:
        expert = build_expert_trajectory(problem)
        for step in expert.steps:
            yield step.action

    def start(self, problem: Problem, budget_t: int, rng: random.Random):
        return _GenDriver(self._run(problem, budget_t, rng))


@dataclass
class CollapsedPolicy:
    """Draws one query sequence per sample from a fixed per-problem pool.

    Models a policy whose strategy distribution has collapsed to a small
    support; the unique-sequence count over n samples can never exceed the
    pool size. Pools are either supplied explicitly or derived from the
    problem id.
    """

    policy_id: str
    pool_size: int = 0
    sequence_length: int = 2
    answer_text: str = "UNKNOWN"
    pools: dict[str, list[list[str]]] | None = None

    def pool_for(self, problem: Problem) -> list[list[str]]:
        if self.pools is not None:
            pool = self.pools.get(problem.id)
            if not pool:
                raise ConfigError(
                    f"collapsed policy {self.policy_id!r}: empty pool for "
                    f"problem {problem.id!r}"
                )
            return pool
        if self.pool_size < 1:
            raise ConfigError(
                f"collapsed policy {self.policy_id!r}: pool_size must be >= 1"
            )
        return [
            [
                f"{problem.id} probe {j} step {h + 1}"
                for h in range(self.sequence_length)
            ]
            for j in range(self.pool_size)
        ]

    def _run(
        self, problem: Problem, budget_t: int, rng: random.Random
    ) -> Generator[Action, str | None, None]:
        pool = self.pool_for(problem)
        sequence = pool[rng.randrange(len(pool))]
        for query in sequence[:budget_t]:
            yield Action("search", query)
        yield Action("answer", self.answer_text)

    def start(self, problem: Problem, budget_t: int, rng: random.Random):
        return _GenDriver(self._run(problem, budget_t, rng))


@dataclass
class MixturePolicy:
    """Selects one component per sample; models strategy reweighting."""

    policy_id: str
    components: list[Any]
    weights: list[float]

    def __post_init__(self) -> None:
        if len(self.components) != len(self.weights) or not self.components:
            raise ConfigError("mixture needs matching non-empty components/weights")
        if any(w < 0 for w in self.weights):
            raise ConfigError("mixture weights must be >= 0")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError("mixture weights must sum to 1")

    def start(self, problem: Problem, budget_t: int, rng: random.Random):
        draw = rng.random()
        cumulative = 0.0
        chosen = self.components[-1]
        for component, weight in zip(self.components, self.weights):
            cumulative += weight
            if draw < cumulative:
                chosen = component
                break
        return chosen.start(problem, budget_t, rng)


def build_policy(spec: PolicySpec, *, nested_ts: tuple[int, ...] | None = None):
    """Instantiate a policy from its declarative spec."""
    params = spec.params
    if spec.kind == "table":
        overrides: dict[tuple[str, int], float] = {}
        for pid, per_t in dict(params.get("table", {})).items():
            for t, p in dict(per_t).items():
                overrides[(str(pid), int(t))] = float(p)
        default_p = params.get("default_p")
        return TablePolicy(
            policy_id=spec.id,
            default_p=None if default_p is None else float(default_p),
            overrides=overrides,
            nested_ts=nested_ts,
        )
    if spec.kind == "scripted_bridge":
        return ScriptedBridgePolicy(policy_id=spec.id)
    if spec.kind == "scripted_comparison":
        return ScriptedComparisonPolicy(policy_id=spec.id)
    if spec.kind == "expert_replay":
        return ExpertReplayPolicy(policy_id=spec.id)
    if spec.kind == "collapsed":
        pools = params.get("pools")
        return CollapsedPolicy(
            policy_id=spec.id,
            pool_size=int(params.get("pool_size", 0)),
            sequence_length=int(params.get("sequence_length", 2)),
            answer_text=str(params.get("answer", "UNKNOWN")),
            pools={str(k): [list(map(str, s)) for s in v] for k, v in pools.items()}
            if pools
            else None,
        )
    if spec.kind == "mixture":
        component_specs = [
            PolicySpec.from_dict(dict(c)) for c in params.get("components", [])
        ]
        components = [
            build_policy(c, nested_ts=nested_ts) for c in component_specs
        ]
        weights = [float(w) for w in params.get("weights", [])]
        return MixturePolicy(
            policy_id=spec.id, components=components, weights=weights
        )
    raise ConfigError(f"unknown policy kind {spec.kind!r}")


def _check_truncation_consistent(
    spec: PolicySpec, problems: ProblemSet, ts: tuple[int, ...]
) -> None:
    """Nested mode requires policies whose truncations stay meaningful."""
    if spec.kind == "table":
        policy = build_policy(spec)
        for problem in problems.problems:
            values = [policy.p(problem.id, t) for t in ts]
            if any(b < a for a, b in zip(values, values[1:])):
                raise ConfigError(
                    f"table policy {spec.id!r} is not truncation-consistent: "
                    f"p must be non-decreasing in T (problem {problem.id!r})"
                )
    elif spec.kind == "mixture":
        for component in spec.params.get("components", []):
            _check_truncation_consistent(
                PolicySpec.from_dict(dict(component)), problems, ts
            )


def _rollout_problem(
    args: tuple[dict[str, Any], Problem, EvalGrid, int, bool],
) -> list[RolloutCell]:
    """Worker body: all cells of one problem. Module-level for pickling."""
    spec_dict, problem, grid, run_seed, store = args
    spec = PolicySpec.from_dict(spec_dict)
    nested = grid.mode == "nested"
    policy = build_policy(spec, nested_ts=grid.ts if nested else None)
    index: Bm25Index | None = (
        build_index(problem.paragraphs) if problem.paragraphs else None
    )
    cells: list[RolloutCell] = []
    if nested:
        t_max = grid.ts[-1]
        per_t: dict[int, list[Trajectory]] = {t: [] for t in grid.ts}
        for i in range(grid.n):
            seed = derive_seed(run_seed, problem.id, t_max, i)
            full = run_episode(
                policy, problem, t_max, seed, index=index, sample_index=i
            )
            for t in grid.ts:
                per_t[t].append(
                    full
                    if t == t_max
                    else truncate_trajectory(full, t, problem.gold_answer)
                )
        for t in grid.ts:
            trajectories = per_t[t]
            cells.append(
                RolloutCell(
                    problem_id=problem.id,
                    t=t,
                    n=grid.n,
                    successes=sum(1 for tr in trajectories if tr.success),
                    trajectories=tuple(trajectories) if store else None,
                )
            )
    else:
        for t in grid.ts:
            trajectories = []
            for i in range(grid.n):
                seed = derive_seed(run_seed, problem.id, t, i)
                trajectories.append(
                    run_episode(
                        policy, problem, t, seed, index=index, sample_index=i
                    )
                )
            cells.append(
                RolloutCell(
                    problem_id=problem.id,
                    t=t,
                    n=grid.n,
                    successes=sum(1 for tr in trajectories if tr.success),
                    trajectories=tuple(trajectories) if store else None,
                )
            )
    return cells


def rollout_grid(
    spec: PolicySpec,
    problems: ProblemSet,
    grid: EvalGrid,
    run_seed: int,
    *,
    store_trajectories: bool = True,
    workers: int = 1,
) -> RolloutGrid:
    """Roll a policy over every (problem, T) cell of the grid.

    Independent mode seeds every (problem, T, sample) episode separately.
    Nested mode runs each sample once at the deepest T and derives shallower
    cells by truncation, so success is monotone in T per sample. The result
    is bit-identical for any worker count.
    """
    if grid.mode == "nested":
        _check_truncation_consistent(spec, problems, grid.ts)
    if any(p.category == "reasoning" for p in problems.problems) and any(
        t > 0 for t in grid.ts
    ):
        raise ConfigError(
            "problem set contains tool-free problems; use ts=[0] for them"
        )
    work = [
        (spec.to_dict(), problem, grid, run_seed, store_trajectories)
        for problem in problems.problems
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rollout_problem, work))
    else:
        results = [_rollout_problem(item) for item in work]
    cells: dict[tuple[str, int], RolloutCell] = {}
    for problem_cells in results:
        for cell in problem_cells:
            cells[(cell.problem_id, cell.t)] = cell
    return RolloutGrid(
        policy_id=spec.id, cells=cells, grid=grid, run_seed=run_seed
    )
