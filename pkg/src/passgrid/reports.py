"""File formats and report emission.

All tables are RFC-4180-style CSV with a leading ``# manifest_hash=<hex>``
comment line tying every artifact to the run configuration that produced it.
Trajectories are JSONL with observations flattened into their own records;
problem sets and manifests are single JSON documents.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .diagnostics import (
    BootstrapReport,
    BudgetRecommendation,
    MarginalRow,
    MarginalTable,
    RatioCell,
    SaturationResult,
    SubsampleReport,
)
from .errors import ConfigError, DataError
from .mechanism import DiversityReport, PplReport, TokenNllRecord
from .metrics import CapabilityReport, PassSurface
from .policies import EvalGrid, PolicySpec, RolloutGrid
from .transcript import Action, Step, Trajectory

BEYOND_GRID = "beyond-grid"
SAT = "sat"


# ---------------------------------------------------------------------------
# Trajectory JSONL


def trajectory_to_record(trajectory: Trajectory) -> dict[str, Any]:
    steps: list[dict[str, str]] = []
    for step in trajectory.steps:
        steps.append({"type": step.action.kind, "text": step.action.text})
        if step.action.kind == "search":
            steps.append({"type": "observation", "text": step.observation or ""})
    return {
        "problem_id": trajectory.problem_id,
        "policy_id": trajectory.policy_id,
        "T": trajectory.budget_t,
        "sample_index": trajectory.sample_index,
        "seed": trajectory.seed,
        "steps": steps,
        "success": trajectory.success,
    }


def trajectory_from_record(record: dict[str, Any]) -> Trajectory:
    steps: list[Step] = []
    pending: Action | None = None
    for raw in record.get("steps", []):
        kind, text = str(raw.get("type")), str(raw.get("text", ""))
        if kind == "observation":
            if pending is None:
                raise DataError("observation record does not follow a search")
            steps.append(Step(pending, text))
            pending = None
            continue
        if pending is not None:
            raise DataError("search record is missing its observation")
        action = Action(kind, text)  # type: ignore[arg-type]
        if kind == "search":
            pending = action
        else:
            steps.append(Step(action))
    if pending is not None:
        raise DataError("search record is missing its observation")
    return Trajectory(
        problem_id=str(record["problem_id"]),
        policy_id=str(record["policy_id"]),
        budget_t=int(record["T"]),
        sample_index=int(record["sample_index"]),
        seed=int(record["seed"]),
        steps=tuple(steps),
        success=bool(record["success"]),
    )


def write_trajectories_jsonl(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for trajectory in trajectories:
            fh.write(json.dumps(trajectory_to_record(trajectory), ensure_ascii=False))
            fh.write("\n")


def read_trajectories_jsonl(path: str | Path) -> list[Trajectory]:
    trajectories = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: {exc.msg}") from exc
            trajectories.append(trajectory_from_record(record))
    return trajectories


# ---------------------------------------------------------------------------
# Generic hashed CSV


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(
    path: str | Path,
    header: list[str],
    rows: Iterable[Iterable[Any]],
    manifest_hash: str,
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest_hash={manifest_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def read_csv_rows(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a hashed CSV back as (header, row dicts), skipping # comments."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(io.StringIO("".join(lines)))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty CSV") from None
    rows = []
    for values in reader:
        if len(values) != len(header):
            raise DataError(f"{path}: row width {len(values)} != header {len(header)}")
        rows.append(dict(zip(header, values)))
    return header, rows


# ---------------------------------------------------------------------------
# Counts and pass-surface tables


def write_counts_csv(path: str | Path, grid: RolloutGrid, manifest_hash: str) -> None:
    rows = [
        (cell.problem_id, cell.t, cell.n, cell.successes)
        for cell in grid.cells.values()
    ]
    write_csv(path, ["problem_id", "T", "n", "c"], rows, manifest_hash)


def read_counts_csv(
    path: str | Path, policy_id: str, ks: tuple[int, ...], mode: str = "independent"
) -> RolloutGrid:
    """Rebuild a counts-only rollout grid; ks comes from the caller since the
    counts file does not record it."""
    _, rows = read_csv_rows(path)
    if not rows:
        raise DataError(f"{path}: no count rows")
    counts: dict[tuple[str, int], tuple[int, int]] = {}
    for row in rows:
        try:
            key = (row["problem_id"], int(row["T"]))
            counts[key] = (int(row["n"]), int(row["c"]))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed counts row {row}") from exc
    ns = {n for n, _ in counts.values()}
    if len(ns) != 1:
        raise DataError(f"{path}: cells disagree on n: {sorted(ns)}")
    n = ns.pop()
    ts = tuple(sorted({t for _, t in counts}))
    grid = EvalGrid(ks=ks, ts=ts, n=n, mode=mode)
    return RolloutGrid.from_counts(policy_id, counts, grid)


def counts_from_trajectories(
    trajectories: list[Trajectory], ks: tuple[int, ...], mode: str = "independent"
) -> RolloutGrid:
    """Aggregate a trajectory list into a rollout grid (cells keyed by the
    trajectories' problem and budget)."""
    if not trajectories:
        raise DataError("no trajectories to aggregate")
    policy_ids = {t.policy_id for t in trajectories}
    if len(policy_ids) != 1:
        raise DataError(f"trajectories mix policies: {sorted(policy_ids)}")
    groups: dict[tuple[str, int], list[Trajectory]] = {}
    for t in trajectories:
        groups.setdefault((t.problem_id, t.budget_t), []).append(t)
    ns = {len(g) for g in groups.values()}
    if len(ns) != 1:
        raise DataError(f"cells disagree on sample count: {sorted(ns)}")
    n = ns.pop()
    counts = {
        key: (n, sum(1 for t in group if t.success)) for key, group in groups.items()
    }
    ts = tuple(sorted({t for _, t in counts}))
    grid = EvalGrid(ks=ks, ts=ts, n=n, mode=mode)
    return RolloutGrid.from_counts(policy_ids.pop(), counts, grid)


def write_pass_surface_csv(
    path: str | Path, surfaces: list[PassSurface], manifest_hash: str
) -> None:
    rows = []
    for s in sorted(surfaces, key=lambda s: (s.policy_id, s.category)):
        for t in s.ts():
            for k in s.ks():
                rows.append((s.policy_id, s.category, t, k, s.values[(k, t)]))
    write_csv(path, ["policy", "category", "T", "k", "value"], rows, manifest_hash)


def write_per_problem_csv(
    path: str | Path, surfaces: list[PassSurface], manifest_hash: str
) -> None:
    rows = []
    for s in sorted(surfaces, key=lambda s: (s.policy_id, s.category)):
        if s.per_problem is None:
            continue
        for (pid, k, t), value in sorted(s.per_problem.items()):
            rows.append((s.policy_id, s.category, pid, t, k, value))
    write_csv(
        path,
        ["policy", "category", "problem_id", "T", "k", "value"],
        rows,
        manifest_hash,
    )


def read_pass_surface_csv(path: str | Path) -> list[PassSurface]:
    """Read a pass-surface CSV back into one surface per (policy, category)."""
    _, rows = read_csv_rows(path)
    grouped: dict[tuple[str, str], dict[tuple[int, int], float]] = {}
    for row in rows:
        try:
            key = (row["policy"], row["category"])
            grouped.setdefault(key, {})[(int(row["k"]), int(row["T"]))] = float(
                row["value"]
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed surface row {row}") from exc
    if not grouped:
        raise DataError(f"{path}: no surface rows")
    return [
        PassSurface(policy_id=policy, category=category, values=values)
        for (policy, category), values in sorted(grouped.items())
    ]


# ---------------------------------------------------------------------------
# Diagnostic tables


def write_marginal_csv(
    path: str | Path, tables: list[MarginalTable], manifest_hash: str
) -> None:
    rows = []
    for table in sorted(tables, key=lambda t: (t.policy_id, t.category)):
        for row in sorted(table.rows, key=lambda r: (r.t, r.k)):
            rows.append(
                (table.policy_id, table.category, row.k, row.t, row.delta_k, row.delta_t)
            )
    write_csv(
        path,
        ["policy", "category", "k", "T", "delta_k", "delta_t"],
        rows,
        manifest_hash,
    )


def read_marginal_csv(path: str | Path) -> list[MarginalTable]:
    _, rows = read_csv_rows(path)
    grouped: dict[tuple[str, str], list[MarginalRow]] = {}
    for row in rows:
        try:
            key = (row["policy"], row["category"])
            grouped.setdefault(key, []).append(
                MarginalRow(
                    k=int(row["k"]),
                    t=int(row["T"]),
                    delta_k=float(row["delta_k"]) if row["delta_k"] else None,
                    delta_t=float(row["delta_t"]) if row["delta_t"] else None,
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed marginal row {row}") from exc
    if not grouped:
        raise DataError(f"{path}: no marginal rows")
    return [
        MarginalTable(policy_id=policy, category=category, rows=rows_)
        for (policy, category), rows_ in sorted(grouped.items())
    ]


def write_saturation_csv(
    path: str | Path, results: list[SaturationResult], manifest_hash: str
) -> None:
    rows = [
        (
            r.policy_id,
            r.category,
            r.epsilon,
            BEYOND_GRID if r.t_star is None else r.t_star,
        )
        for r in sorted(results, key=lambda r: (r.category, r.epsilon, r.policy_id))
    ]
    write_csv(path, ["policy", "category", "epsilon", "t_star"], rows, manifest_hash)


def write_heatmap_csv(
    path: str | Path,
    grids: list[tuple[str, str, dict[tuple[int, int], RatioCell]]],
    manifest_hash: str,
) -> None:
    """Long-form fraction-ratio cells; saturated cells carry the sentinel."""
    rows = []
    for policy_id, category, cells in sorted(grids, key=lambda g: (g[0], g[1])):
        for (k, t), cell in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            value = SAT if cell.saturated else cell.ratio
            rows.append((policy_id, category, k, t, value, cell.negative))
    write_csv(
        path,
        ["policy", "category", "k", "T", "value", "negative_delta"],
        rows,
        manifest_hash,
    )


def write_budget_csv(
    path: str | Path, recommendations: list[BudgetRecommendation], manifest_hash: str
) -> None:
    rows = [
        (
            r.policy_id,
            r.category,
            BEYOND_GRID if r.recommended_t is None else r.recommended_t,
            "" if r.crossover_k is None else r.crossover_k,
            r.strategy,
        )
        for r in sorted(recommendations, key=lambda r: (r.category, r.policy_id))
    ]
    write_csv(
        path,
        ["policy", "category", "recommended_T", "crossover_k", "strategy"],
        rows,
        manifest_hash,
    )


def write_capability_csv(
    path: str | Path,
    reports: list[tuple[str, CapabilityReport]],
    manifest_hash: str,
) -> None:
    rows = []
    for category, report in reports:
        counts = report.counts()
        rows.append(
            (
                report.policy_a,
                report.policy_b,
                category,
                report.t,
                counts["only_a"],
                counts["only_b"],
                counts["both"],
                counts["neither"],
            )
        )
    write_csv(
        path,
        ["policy_a", "policy_b", "category", "T", "only_a", "only_b", "both", "neither"],
        rows,
        manifest_hash,
    )


def write_bootstrap_csv(
    path: str | Path,
    blocks: list[tuple[str, str, str, int, list[BootstrapReport]]],
    manifest_hash: str,
) -> None:
    rows = []
    for policy_a, policy_b, category, t, reports in blocks:
        for report in reports:
            rows.append(
                (
                    policy_a,
                    policy_b,
                    category,
                    t,
                    report.statistic,
                    report.mean,
                    report.ci_low,
                    report.ci_high,
                    report.replicates,
                )
            )
    write_csv(
        path,
        [
            "policy_a",
            "policy_b",
            "category",
            "T",
            "statistic",
            "mean",
            "ci_low",
            "ci_high",
            "replicates",
        ],
        rows,
        manifest_hash,
    )


def write_sufficiency_csv(
    path: str | Path,
    blocks: list[tuple[str, str, SubsampleReport]],
    manifest_hash: str,
) -> None:
    rows = [
        (policy, category, r.n_prime, r.mean_abs_delta, r.max_abs_delta)
        for policy, category, r in blocks
    ]
    write_csv(
        path,
        ["policy", "category", "n_prime", "mean_abs_delta", "max_abs_delta"],
        rows,
        manifest_hash,
    )


def write_diversity_csv(
    path: str | Path, policy_id: str, report: DiversityReport, manifest_hash: str
) -> None:
    rows = [
        (policy_id, pid, count) for pid, count in sorted(report.per_problem.items())
    ]
    write_csv(path, ["policy", "problem_id", "unique_sequences"], rows, manifest_hash)


def write_diversity_summary_csv(
    path: str | Path, policy_id: str, report: DiversityReport, manifest_hash: str
) -> None:
    rows = [
        (
            policy_id,
            report.mean,
            report.median,
            report.novelty_fraction,
        )
    ]
    write_csv(
        path,
        ["policy", "mean_unique", "median_unique", "novelty_fraction"],
        rows,
        manifest_hash,
    )


def write_ppl_csv(path: str | Path, report: PplReport, manifest_hash: str) -> None:
    rows = [
        ("search", report.tokens_search, report.surprisal_search, report.ppl_search),
        ("reason", report.tokens_reason, report.surprisal_reason, report.ppl_reason),
    ]
    write_csv(path, ["class", "tokens", "mean_nll", "ppl"], rows, manifest_hash)


# ---------------------------------------------------------------------------
# Token NLL records


def read_token_nll_jsonl(path: str | Path) -> list[TokenNllRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: {exc.msg}") from exc
            spans = {
                str(role): [[float(x) for x in span] for span in span_lists]
                for role, span_lists in dict(raw.get("spans", {})).items()
            }
            records.append(
                TokenNllRecord(
                    trajectory_id=str(raw.get("trajectory_id", f"record-{lineno}")),
                    spans=spans,
                )
            )
    return records


# ---------------------------------------------------------------------------
# Run manifest


@dataclass
class RunManifest:
    """The reproducibility key: everything a rollout + analysis depends on."""

    run_seed: int
    grid: EvalGrid
    policies: list[PolicySpec]
    problem_paths: list[str]
    out_dir: str
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_seed": self.run_seed,
            "grid": {
                "ks": list(self.grid.ks),
                "ts": list(self.grid.ts),
                "n": self.grid.n,
                "mode": self.grid.mode,
            },
            "policies": [spec.to_dict() for spec in self.policies],
            "problems": list(self.problem_paths),
            "out_dir": self.out_dir,
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "RunManifest":
        try:
            grid_obj = dict(obj["grid"])
            grid = EvalGrid(
                ks=tuple(int(k) for k in grid_obj["ks"]),
                ts=tuple(int(t) for t in grid_obj["ts"]),
                n=int(grid_obj.get("n", 64)),
                mode=str(grid_obj.get("mode", "independent")),
            )
            policies = [PolicySpec.from_dict(dict(p)) for p in obj["policies"]]
            return cls(
                run_seed=int(obj["run_seed"]),
                grid=grid,
                policies=policies,
                problem_paths=[str(p) for p in obj["problems"]],
                out_dir=str(obj["out_dir"]),
                extra=dict(obj.get("extra", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed manifest: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc.msg} at line {exc.lineno}") from exc
        return cls.from_dict(raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def manifest_hash(payload: dict[str, Any]) -> str:
    """Canonical sha256 of a JSON-serializable configuration."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
