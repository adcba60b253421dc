"""Pass-rate estimation over the (k, T) grid, capability boundaries, and
capability-set algebra."""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import ProblemSet
from .errors import ConfigError, DataError
from .policies import EvalGrid, RolloutGrid


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimate of P(at least one success in k draws) from n samples
    with c successes.

    Equals 1 - C(n-c, k)/C(n, k), evaluated as the numerically stable product
    1 - prod_{i<k} (n-c-i)/(n-i); no factorials, so n = 64 stays exact-ish in
    float. Returns exactly 1.0 when k > n - c.
    """
    if k < 1 or k > n:
        raise ValueError(f"k={k} outside [1, n={n}]")
    if c < 0 or c > n:
        raise ValueError(f"c={c} outside [0, n={n}]")
    if k > n - c:
        return 1.0
    prod = 1.0
    for i in range(k):
        prod *= (n - c - i) / (n - i)
    return 1.0 - prod


@dataclass
class PassSurface:
    """Pass values on the (k, T) grid for one policy and one category.

    ``values`` maps (k, T) to the unweighted mean over the category's
    problems; ``per_problem`` (optional) maps (problem_id, k, T) to the
    per-problem estimate.
    """

    policy_id: str
    category: str
    values: dict[tuple[int, int], float]
    per_problem: dict[tuple[str, int, int], float] | None = None

    def ks(self) -> tuple[int, ...]:
        return tuple(sorted({k for k, _ in self.values}))

    def ts(self) -> tuple[int, ...]:
        return tuple(sorted({t for _, t in self.values}))

    def value(self, k: int, t: int) -> float:
        key = (k, t)
        if key not in self.values:
            raise DataError(
                f"surface {self.policy_id}/{self.category}: no value at (k={k}, T={t})"
            )
        return self.values[key]


def surface(
    grid: RolloutGrid, problems: ProblemSet, eval_grid: EvalGrid | None = None
) -> list[PassSurface]:
    """Compute one pass surface per category present in the problem set.

    Per-problem values come straight from the estimator; the category value
    is their unweighted mean, summed in problem order for reproducibility.
    """
    eval_grid = eval_grid or grid.grid
    surfaces = []
    for category in problems.categories():
        members = [p for p in problems.problems if p.category == category]
        per_problem: dict[tuple[str, int, int], float] = {}
        values: dict[tuple[int, int], float] = {}
        for t in eval_grid.ts:
            cells = [grid.cell(p.id, t) for p in members]
            for k in eval_grid.ks:
                total = 0.0
                for cell in cells:
                    value = pass_at_k(cell.n, cell.successes, k)
                    per_problem[(cell.problem_id, k, t)] = value
                    total += value
                values[(k, t)] = total / len(members)
        surfaces.append(
            PassSurface(
                policy_id=grid.policy_id,
                category=category,
                values=values,
                per_problem=per_problem,
            )
        )
    return surfaces


@dataclass(frozen=True)
class CapabilitySet:
    """Problems a policy solves at least once at depth T (c_T > 0)."""

    policy_id: str
    t: int
    member_ids: frozenset[str]

    def __len__(self) -> int:
        return len(self.member_ids)


def capability_boundary(grid: RolloutGrid, t: int) -> CapabilitySet:
    """The finite-n capability boundary at depth ``t``.

    Membership c_T > 0 coincides with the estimator hitting exactly 1 at
    k = n, the re-sampling limit.
    """
    if t not in grid.ts_present():
        raise DataError(f"grid has no cells at T={t}")
    members = frozenset(
        pid for (pid, cell_t), cell in grid.cells.items()
        if cell_t == t and cell.successes > 0
    )
    return CapabilitySet(policy_id=grid.policy_id, t=t, member_ids=members)


@dataclass(frozen=True)
class CapabilityReport:
    """Four-way decomposition of two capability sets over a problem universe."""

    policy_a: str
    policy_b: str
    t: int
    only_a: frozenset[str]
    only_b: frozenset[str]
    both: frozenset[str]
    neither: frozenset[str]

    def counts(self) -> dict[str, int]:
        return {
            "only_a": len(self.only_a),
            "only_b": len(self.only_b),
            "both": len(self.both),
            "neither": len(self.neither),
        }


def boundary_diff(
    a: CapabilitySet, b: CapabilitySet, universe: frozenset[str] | set[str]
) -> CapabilityReport:
    """Set algebra between two boundaries: only_a, only_b, both, neither."""
    if a.t != b.t:
        raise DataError(f"cannot compare boundaries at T={a.t} and T={b.t}")
    universe = frozenset(universe)
    if not a.member_ids <= universe or not b.member_ids <= universe:
        raise DataError("boundary members must be a subset of the universe")
    both = a.member_ids & b.member_ids
    return CapabilityReport(
        policy_a=a.policy_id,
        policy_b=b.policy_id,
        t=a.t,
        only_a=frozenset(a.member_ids - b.member_ids),
        only_b=frozenset(b.member_ids - a.member_ids),
        both=frozenset(both),
        neither=frozenset(universe - (a.member_ids | b.member_ids)),
    )


@dataclass(frozen=True)
class MatrixRow:
    problem_id: str
    values: dict[str, float]


def per_problem_matrix(
    surfaces: list[PassSurface], k: int, t: int, sort_by: str
) -> list[MatrixRow]:
    """Per-problem values of several surfaces at one (k, T), as rows sorted
    descending by the chosen policy's value (ties broken by problem id)."""
    by_policy = {s.policy_id: s for s in surfaces}
    if sort_by not in by_policy:
        raise ConfigError(f"unknown sort policy {sort_by!r}")
    for s in surfaces:
        if s.per_problem is None:
            raise DataError(
                f"surface {s.policy_id}/{s.category} has no per-problem values"
            )
    reference = by_policy[sort_by]
    pids = sorted({pid for pid, kk, tt in reference.per_problem if (kk, tt) == (k, t)})
    if not pids:
        raise DataError(f"no per-problem values at (k={k}, T={t})")
    pid_set = set(pids)
    for s in surfaces:
        s_pids = {pid for pid, kk, tt in s.per_problem if (kk, tt) == (k, t)}
        if s_pids != pid_set:
            raise DataError(
                f"surface {s.policy_id}/{s.category} covers a different problem set"
            )
    rows = [
        MatrixRow(
            problem_id=pid,
            values={s.policy_id: s.per_problem[(pid, k, t)] for s in surfaces},
        )
        for pid in pids
    ]
    rows.sort(key=lambda r: (-r.values[sort_by], r.problem_id))
    return rows
