"""Marginal-value decomposition, interaction saturation, budget
recommendations, bootstrap confidence intervals, and sampling-sufficiency
checks over pass surfaces and rollout grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .metrics import PassSurface, pass_at_k
from .policies import EvalGrid, RolloutGrid

DEFAULT_SAT_THRESHOLD = 0.005


def delta_k(surface: PassSurface, k: int, t: int) -> float:
    """Marginal value of doubling the sampling budget at (k, T)."""
    if (2 * k, t) not in surface.values:
        raise DataError(f"cannot compute delta_k at k={k}: no value at k={2 * k}")
    return surface.value(2 * k, t) - surface.value(k, t)


def _t_successor(surface: PassSurface, t: int) -> int:
    ts = surface.ts()
    if t not in ts:
        raise DataError(f"T={t} not on the surface grid {ts}")
    larger = [x for x in ts if x > t]
    if not larger:
        raise DataError(f"T={t} is the grid maximum; no per-round gap beyond it")
    return larger[0]


def delta_t(surface: PassSurface, k: int, t: int) -> float:
    """Per-round marginal value of deepening interaction at (k, T).

    Uses the next-larger grid depth and divides by the step width, so the
    non-uniform depth grid stays comparable per round.
    """
    t_next = _t_successor(surface, t)
    return (surface.value(k, t_next) - surface.value(k, t)) / (t_next - t)


@dataclass(frozen=True)
class MarginalRow:
    k: int
    t: int
    delta_k: float | None
    delta_t: float | None


@dataclass
class MarginalTable:
    """All computable marginal improvements for one policy and category."""

    policy_id: str
    category: str
    rows: list[MarginalRow]

    def row(self, k: int, t: int) -> MarginalRow | None:
        for r in self.rows:
            if r.k == k and r.t == t:
                return r
        return None


def marginal_table(surface: PassSurface) -> MarginalTable:
    """Tabulate delta_k (where 2k is on the grid) and delta_t (where a deeper
    T exists) at every operating point."""
    ks, ts = surface.ks(), surface.ts()
    rows = []
    for t in ts:
        for k in ks:
            dk = delta_k(surface, k, t) if 2 * k in ks else None
            dt = delta_t(surface, k, t) if t != ts[-1] else None
            if dk is None and dt is None:
                continue
            rows.append(MarginalRow(k=k, t=t, delta_k=dk, delta_t=dt))
    return MarginalTable(policy_id=surface.policy_id, category=surface.category, rows=rows)


@dataclass(frozen=True)
class SaturationResult:
    policy_id: str
    category: str
    epsilon: float
    t_star: int | None  # None means the gap never fell below epsilon on the grid


def saturation(surface: PassSurface, epsilon: float, k_max: int) -> SaturationResult:
    """Smallest depth whose per-round gap at k_max drops below epsilon.

    Scans depths in grid order; returns the beyond-grid sentinel (t_star =
    None) when every gap stays at or above epsilon.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if k_max not in surface.ks():
        raise DataError(f"k_max={k_max} not on the surface grid {surface.ks()}")
    ts = surface.ts()
    for t in ts[:-1]:
        if delta_t(surface, k_max, t) < epsilon:
            return SaturationResult(surface.policy_id, surface.category, epsilon, t)
    return SaturationResult(surface.policy_id, surface.category, epsilon, None)


@dataclass(frozen=True)
class RatioCell:
    ratio: float | None  # None when saturated
    saturated: bool
    negative: bool  # flags cells where either delta came in negative


def fraction_ratio_grid(
    surface: PassSurface, sat_threshold: float = DEFAULT_SAT_THRESHOLD
) -> dict[tuple[int, int], RatioCell]:
    """The share delta_t / (delta_t + delta_k) at every point where both
    marginals exist.

    Cells where both marginals are below the threshold in magnitude (or the
    denominator vanishes) are reported as saturated rather than as noisy
    ratios; cells with a negative marginal keep their signed ratio but are
    flagged.
    """
    if sat_threshold < 0:
        raise ConfigError("sat_threshold must be >= 0")
    ks, ts = surface.ks(), surface.ts()
    cells: dict[tuple[int, int], RatioCell] = {}
    for t in ts[:-1]:
        for k in ks:
            if 2 * k not in ks:
                continue
            dk = delta_k(surface, k, t)
            dt = delta_t(surface, k, t)
            negative = dk < 0 or dt < 0
            if (abs(dt) < sat_threshold and abs(dk) < sat_threshold) or dt + dk == 0:
                cells[(k, t)] = RatioCell(None, True, negative)
            else:
                cells[(k, t)] = RatioCell(dt / (dt + dk), False, negative)
    return cells


@dataclass(frozen=True)
class BudgetRecommendation:
    policy_id: str
    category: str
    recommended_t: int | None  # None: depth keeps paying through the grid max
    crossover_k: int | None  # None: sampling never overtakes depth at T=1
    strategy: str


def budget_recommendation(table: MarginalTable) -> BudgetRecommendation:
    """Budget-allocation rule derived from the marginal table.

    Recommended depth is one round past the first depth where doubling the
    sampling budget overtakes deepening at k = 4; the crossover k is the
    smallest sampling budget where that already holds at depth 1.
    """
    rows_k4 = sorted(
        (r for r in table.rows if r.k == 4 and r.delta_k is not None and r.delta_t is not None),
        key=lambda r: r.t,
    )
    rows_t1 = sorted(
        (r for r in table.rows if r.t == 1 and r.delta_k is not None and r.delta_t is not None),
        key=lambda r: r.k,
    )
    if not rows_k4 or not rows_t1:
        raise DataError(
            f"marginal table {table.policy_id}/{table.category} lacks the "
            "k=4 and T=1 rows needed for a recommendation"
        )
    recommended_t: int | None = None
    for row in rows_k4:
        if row.delta_t < row.delta_k:
            recommended_t = row.t + 1
            break
    crossover_k: int | None = None
    for row in rows_t1:
        if row.delta_t < row.delta_k:
            crossover_k = row.k
            break
    if recommended_t is None:
        strategy = "deepen through the grid maximum, then grow k"
    else:
        strategy = f"deepen to T = {recommended_t}, then grow k"
    return BudgetRecommendation(
        policy_id=table.policy_id,
        category=table.category,
        recommended_t=recommended_t,
        crossover_k=crossover_k,
        strategy=strategy,
    )


@dataclass(frozen=True)
class BootstrapReport:
    statistic: str
    mean: float
    ci_low: float
    ci_high: float
    replicates: int


def bootstrap_boundary(
    grid_a: RolloutGrid,
    grid_b: RolloutGrid,
    t: int,
    replicates: int,
    seed: int,
) -> list[BootstrapReport]:
    """Bootstrap the boundary statistics of two policies at depth ``t``.

    Each replicate redraws every problem's success count as Binomial(n, c/n)
    for both policies independently, then recomputes boundary sizes and the
    four-way decomposition. Reports carry the mean and 2.5/97.5 percentile
    interval over replicates. Replicate streams derive from (seed, index) so
    the result is schedule-independent.
    """
    if replicates < 1:
        raise ConfigError("replicate count must be >= 1")
    pids = sorted(grid_a.problem_ids())
    if pids != sorted(grid_b.problem_ids()):
        raise DataError("bootstrap requires grids over the same problems")
    cells_a = [grid_a.cell(pid, t) for pid in pids]
    cells_b = [grid_b.cell(pid, t) for pid in pids]
    n_a = np.array([c.n for c in cells_a])
    n_b = np.array([c.n for c in cells_b])
    p_a = np.array([c.successes / c.n for c in cells_a])
    p_b = np.array([c.successes / c.n for c in cells_b])

    names = ("size_a", "size_b", "only_a", "only_b", "both", "neither")
    stats = {name: np.empty(replicates) for name in names}
    for rep in range(replicates):
        rng = np.random.default_rng([seed, rep])
        member_a = rng.binomial(n_a, p_a) > 0
        member_b = rng.binomial(n_b, p_b) > 0
        stats["size_a"][rep] = member_a.sum()
        stats["size_b"][rep] = member_b.sum()
        stats["only_a"][rep] = (member_a & ~member_b).sum()
        stats["only_b"][rep] = (member_b & ~member_a).sum()
        stats["both"][rep] = (member_a & member_b).sum()
        stats["neither"][rep] = (~member_a & ~member_b).sum()

    reports = []
    for name in names:
        values = stats[name]
        low, high = np.percentile(values, [2.5, 97.5])
        reports.append(
            BootstrapReport(
                statistic=name,
                mean=float(values.mean()),
                ci_low=float(low),
                ci_high=float(high),
                replicates=replicates,
            )
        )
    return reports


@dataclass(frozen=True)
class SubsampleReport:
    n_prime: int
    mean_abs_delta: float
    max_abs_delta: float


def sampling_sufficiency(
    grid: RolloutGrid, n_prime: int, eval_grid: EvalGrid, seed: int
) -> SubsampleReport:
    """Deviation of mean pass values recomputed from an n'-subsample.

    Each cell's subsample count is a hypergeometric redraw of c' from
    (n, c, n'), equivalent to subsampling stored trajectories without
    replacement. Deviations aggregate over every grid cell with k <= n'.
    """
    if n_prime < 1:
        raise ValueError("n_prime must be >= 1")
    if n_prime > grid.grid.n:
        raise ValueError(f"n_prime={n_prime} exceeds n={grid.grid.n}")
    rng = np.random.default_rng([seed, n_prime])
    pids = sorted(grid.problem_ids())
    ks = [k for k in eval_grid.ks if k <= n_prime]
    if not ks:
        raise ConfigError(f"no grid k fits the subsample size {n_prime}")
    deltas = []
    for t in eval_grid.ts:
        cells = [grid.cell(pid, t) for pid in pids]
        sub_counts = [
            int(rng.hypergeometric(cell.successes, cell.n - cell.successes, n_prime))
            for cell in cells
        ]
        for k in ks:
            full = sum(pass_at_k(cell.n, cell.successes, k) for cell in cells)
            sub = sum(pass_at_k(n_prime, c, k) for c in sub_counts)
            deltas.append(abs(sub / len(cells) - full / len(cells)))
    return SubsampleReport(
        n_prime=n_prime,
        mean_abs_delta=float(sum(deltas) / len(deltas)),
        max_abs_delta=float(max(deltas)),
    )
