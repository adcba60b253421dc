"""Command-line entry point.

Subcommands: gen-fixtures (synthetic corpora), rollout (policy grids to
trajectories + counts), analyze (surfaces and every diagnostic table), and
mechanism (diversity, perplexity decomposition, retrieval-context prompts).

Exit codes: 0 success, 2 configuration error, 3 data/invariant error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import diagnostics, fixtures, mechanism, metrics, reports
from .corpus import ProblemSet, load_problem_set, save_problem_set
from .errors import ConfigError, DataError
from .policies import EvalGrid, PolicySpec, RolloutGrid, rollout_grid
from .reports import RunManifest, manifest_hash

DEFAULT_KS = (1, 2, 4, 8, 16, 32, 64)
DEFAULT_TS = (0, 1, 2, 3, 5)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _id_path(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(
            f"expected <policy_id>=<path>, got {text!r}"
        )
    policy_id, path = text.split("=", 1)
    return policy_id, path


def _merge_problem_sets(paths: list[str]) -> ProblemSet:
    problems = []
    seed = 42
    split = "test"
    for path in paths:
        ps = load_problem_set(path)
        problems.extend(ps.problems)
        seed, split = ps.seed, ps.split
    return ProblemSet(tuple(problems), split=split, seed=seed)


# ---------------------------------------------------------------------------
# gen-fixtures


def cmd_gen_fixtures(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sets = fixtures.generate_problem_sets(
        args.reasoning, args.comparison, args.bridge, args.seed, split=args.split
    )
    for category, problem_set in sets.items():
        path = out / f"{category}.json"
        save_problem_set(problem_set, path)
        print(f"wrote {path} ({len(problem_set.problems)} problems)")
    return 0


# ---------------------------------------------------------------------------
# rollout


def _manifest_from_args(args: argparse.Namespace) -> RunManifest:
    if args.manifest:
        manifest = RunManifest.load(args.manifest)
        if args.out:
            manifest.out_dir = args.out
        return manifest
    if not args.problems or not args.policy or not args.out:
        raise ConfigError(
            "rollout needs either --manifest or all of --problems/--policy/--out"
        )
    specs = []
    for path in args.policy:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc.msg} at line {exc.lineno}") from exc
        specs.append(PolicySpec.from_dict(raw))
    grid = EvalGrid(ks=args.ks, ts=args.ts, n=args.n, mode=args.mode)
    return RunManifest(
        run_seed=args.seed,
        grid=grid,
        policies=specs,
        problem_paths=list(args.problems),
        out_dir=args.out,
    )


def cmd_rollout(args: argparse.Namespace) -> int:
    manifest = _manifest_from_args(args)
    mhash = manifest_hash(manifest.to_dict())
    problems = _merge_problem_sets(manifest.problem_paths)
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest.save(out / "manifest.json")
    for spec in manifest.policies:
        grid = rollout_grid(
            spec,
            problems,
            manifest.grid,
            manifest.run_seed,
            store_trajectories=True,
            workers=args.workers,
        )
        trajectories = []
        for cell in grid.cells.values():
            trajectories.extend(cell.trajectories or ())
        reports.write_trajectories_jsonl(
            out / f"trajectories_{spec.id}.jsonl", trajectories
        )
        reports.write_counts_csv(out / f"counts_{spec.id}.csv", grid, mhash)
        print(
            f"policy {spec.id}: {len(trajectories)} trajectories over "
            f"{len(problems.problems)} problems"
        )
    return 0


# ---------------------------------------------------------------------------
# analyze


def _load_grids(args: argparse.Namespace) -> list[RolloutGrid]:
    grids = []
    for policy_id, path in args.counts or []:
        grids.append(reports.read_counts_csv(path, policy_id, ks=args.ks, mode=args.mode))
    for policy_id, path in args.trajectories or []:
        trajectories = reports.read_trajectories_jsonl(path)
        grid = reports.counts_from_trajectories(trajectories, ks=args.ks, mode=args.mode)
        if grid.policy_id != policy_id:
            grid.policy_id = policy_id
        grids.append(grid)
    return grids


def _analyze_goldens(args: argparse.Namespace, out: Path, mhash: str) -> int:
    surfaces = reports.read_pass_surface_csv(args.pass_table)
    k_max = args.k_max or max(surfaces[0].ks())
    saturations = [
        diagnostics.saturation(s, eps, k_max) for s in surfaces for eps in args.epsilon
    ]
    reports.write_saturation_csv(out / "saturation.csv", saturations, mhash)
    tables = [diagnostics.marginal_table(s) for s in surfaces]
    reports.write_marginal_csv(out / "marginal.csv", tables, mhash)
    heatmaps = [
        (s.policy_id, s.category, diagnostics.fraction_ratio_grid(s))
        for s in surfaces
        if any(2 * k in s.ks() for k in s.ks())
    ]
    if heatmaps:
        reports.write_heatmap_csv(out / "heatmap.csv", heatmaps, mhash)
    budget_tables = reports.read_marginal_csv(args.marginals) if args.marginals else tables
    recommendations = []
    for table in budget_tables:
        try:
            recommendations.append(diagnostics.budget_recommendation(table))
        except DataError as exc:
            if args.marginals:
                raise
            print(f"note: skipping budget row: {exc}", file=sys.stderr)
    if recommendations:
        reports.write_budget_csv(out / "budget.csv", recommendations, mhash)
    print(f"analyzed {len(surfaces)} ingested surfaces -> {out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "command": "analyze",
        "ks": list(args.ks),
        "ts": list(args.ts),
        "epsilon": list(args.epsilon),
        "k_max": args.k_max,
        "boundary_t": args.boundary_t,
        "replicates": args.replicates,
        "seed": args.seed,
        "subsample": list(args.subsample),
        "mode": args.mode,
        "counts": [[pid, str(path)] for pid, path in (args.counts or [])],
        "trajectories": [[pid, str(path)] for pid, path in (args.trajectories or [])],
        "pass_table": args.pass_table,
        "marginals": args.marginals,
    }
    mhash = manifest_hash(config)

    if args.paper_goldens:
        if not args.pass_table:
            raise ConfigError("--paper-goldens requires --pass-table")
        return _analyze_goldens(args, out, mhash)

    grids = _load_grids(args)
    if not grids:
        raise ConfigError("analyze needs --counts or --trajectories input")
    if not args.problems:
        raise ConfigError("analyze needs --problems for category grouping")
    problems = _merge_problem_sets(args.problems)

    all_surfaces = []
    tables = []
    heatmaps = []
    sufficiency_blocks = []
    for grid in grids:
        eval_grid = EvalGrid(
            ks=args.ks, ts=grid.ts_present(), n=grid.grid.n, mode=args.mode
        )
        surfaces = metrics.surface(grid, problems, eval_grid)
        all_surfaces.extend(surfaces)
        for s in surfaces:
            tables.append(diagnostics.marginal_table(s))
            if len(s.ts()) > 1 and any(2 * k in s.ks() for k in s.ks()):
                heatmaps.append(
                    (s.policy_id, s.category, diagnostics.fraction_ratio_grid(s))
                )
        for category in problems.categories():
            members = frozenset(
                p.id for p in problems.problems if p.category == category
            )
            sub = RolloutGrid(
                policy_id=grid.policy_id,
                cells={k: v for k, v in grid.cells.items() if k[0] in members},
                grid=grid.grid,
                run_seed=grid.run_seed,
            )
            for n_prime in args.subsample:
                if n_prime > grid.grid.n:
                    continue
                sufficiency_blocks.append(
                    (
                        grid.policy_id,
                        category,
                        diagnostics.sampling_sufficiency(
                            sub, n_prime, eval_grid, args.seed
                        ),
                    )
                )

    reports.write_pass_surface_csv(out / "pass_surface.csv", all_surfaces, mhash)
    reports.write_per_problem_csv(out / "pass_surface_per_problem.csv", all_surfaces, mhash)
    reports.write_marginal_csv(out / "marginal.csv", tables, mhash)
    if heatmaps:
        reports.write_heatmap_csv(out / "heatmap.csv", heatmaps, mhash)

    saturations = []
    recommendations = []
    for s in all_surfaces:
        k_max = args.k_max or max(s.ks())
        if len(s.ts()) > 1:
            for eps in args.epsilon:
                saturations.append(diagnostics.saturation(s, eps, k_max))
    if saturations:
        reports.write_saturation_csv(out / "saturation.csv", saturations, mhash)
    for table in tables:
        try:
            recommendations.append(diagnostics.budget_recommendation(table))
        except DataError:
            continue  # surfaces without the k=4 / T=1 rows have no budget row
    if recommendations:
        reports.write_budget_csv(out / "budget.csv", recommendations, mhash)

    capability_rows = []
    bootstrap_blocks = []
    boundary_t = args.boundary_t
    for i in range(len(grids)):
        for j in range(i + 1, len(grids)):
            grid_a, grid_b = grids[i], grids[j]
            t = boundary_t if boundary_t is not None else grid_a.ts_present()[-1]
            if t not in grid_a.ts_present() or t not in grid_b.ts_present():
                continue
            for category in problems.categories():
                members = frozenset(
                    p.id for p in problems.problems if p.category == category
                )
                sub_a = RolloutGrid(
                    grid_a.policy_id,
                    {k: v for k, v in grid_a.cells.items() if k[0] in members},
                    grid_a.grid,
                    grid_a.run_seed,
                )
                sub_b = RolloutGrid(
                    grid_b.policy_id,
                    {k: v for k, v in grid_b.cells.items() if k[0] in members},
                    grid_b.grid,
                    grid_b.run_seed,
                )
                report = metrics.boundary_diff(
                    metrics.capability_boundary(sub_a, t),
                    metrics.capability_boundary(sub_b, t),
                    members,
                )
                capability_rows.append((category, report))
                bootstrap_blocks.append(
                    (
                        grid_a.policy_id,
                        grid_b.policy_id,
                        category,
                        t,
                        diagnostics.bootstrap_boundary(
                            sub_a, sub_b, t, args.replicates, args.seed
                        ),
                    )
                )
    if capability_rows:
        reports.write_capability_csv(out / "capability.csv", capability_rows, mhash)
    if bootstrap_blocks:
        reports.write_bootstrap_csv(out / "bootstrap.csv", bootstrap_blocks, mhash)
    if sufficiency_blocks:
        reports.write_sufficiency_csv(out / "sufficiency.csv", sufficiency_blocks, mhash)
    print(f"analyzed {len(grids)} grids -> {out}")
    return 0


# ---------------------------------------------------------------------------
# mechanism


def cmd_mechanism(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy_id, path = args.trajectories
    subject = reports.read_trajectories_jsonl(path)
    config = {
        "command": "mechanism",
        "trajectories": [policy_id, str(path)],
        "reference": list(args.reference) if args.reference else None,
        "nll": args.nll,
        "problems": args.problems,
    }
    mhash = manifest_hash(config)

    if args.novelty and not args.reference:
        raise ConfigError("--novelty requires --reference")
    reference = None
    if args.reference:
        _, ref_path = args.reference
        reference = reports.read_trajectories_jsonl(ref_path)
    report = mechanism.strategy_diversity(subject, reference)
    reports.write_diversity_csv(out / "diversity.csv", policy_id, report, mhash)
    reports.write_diversity_summary_csv(
        out / "diversity_summary.csv", policy_id, report, mhash
    )

    if args.nll:
        records = reports.read_token_nll_jsonl(args.nll)
        ppl = mechanism.ppl_decompose(records)
        reports.write_ppl_csv(out / "ppl.csv", ppl, mhash)

    if args.problems:
        problems = _merge_problem_sets(args.problems)
        prompts_dir = out / "prompts"
        prompts_dir.mkdir(exist_ok=True)
        by_id = problems.by_id()
        written = 0
        for problem_id in sorted({t.problem_id for t in subject}):
            problem = by_id.get(problem_id)
            if problem is None:
                continue
            first_success = next(
                (t for t in subject if t.problem_id == problem_id and t.success),
                None,
            )
            if first_success is None:
                continue
            hops = mechanism.extract_hops(first_success)
            if not hops:
                continue
            text = mechanism.cross_policy_prompt(problem, hops)
            (prompts_dir / f"{problem_id}.txt").write_text(text, encoding="utf-8")
            written += 1
        print(f"wrote {written} prompt files")
    print(f"mechanism reports -> {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passgrid",
        description="Two-dimensional pass-rate evaluation for tool-using agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-fixtures", help="generate synthetic problem sets")
    gen.add_argument("--out", required=True)
    gen.add_argument("--reasoning", type=int, default=0)
    gen.add_argument("--comparison", type=int, default=0)
    gen.add_argument("--bridge", type=int, default=0)
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--split", choices=("train", "test"), default="test")
    gen.set_defaults(func=cmd_gen_fixtures)

    roll = sub.add_parser("rollout", help="roll policies over a problem grid")
    roll.add_argument("--manifest", help="run manifest JSON")
    roll.add_argument("--problems", action="append", help="problem-set JSON path")
    roll.add_argument("--policy", action="append", help="policy spec JSON path")
    roll.add_argument("--out")
    roll.add_argument("--seed", type=int, default=42)
    roll.add_argument("--n", type=int, default=64)
    roll.add_argument("--ks", type=_ints, default=DEFAULT_KS)
    roll.add_argument("--ts", type=_ints, default=DEFAULT_TS)
    roll.add_argument("--mode", choices=("independent", "nested"), default="independent")
    roll.add_argument("--workers", type=int, default=1)
    roll.set_defaults(func=cmd_rollout)

    ana = sub.add_parser("analyze", help="compute surfaces and diagnostics")
    ana.add_argument("--counts", action="append", type=_id_path, metavar="ID=PATH")
    ana.add_argument(
        "--trajectories", action="append", type=_id_path, metavar="ID=PATH"
    )
    ana.add_argument("--problems", action="append")
    ana.add_argument("--out", required=True)
    ana.add_argument("--ks", type=_ints, default=DEFAULT_KS)
    ana.add_argument("--ts", type=_ints, default=DEFAULT_TS)
    ana.add_argument("--epsilon", type=float, action="append")
    ana.add_argument("--k-max", type=int, default=None)
    ana.add_argument("--boundary-t", type=int, default=None)
    ana.add_argument("--replicates", type=int, default=1000)
    ana.add_argument("--seed", type=int, default=42)
    ana.add_argument("--subsample", type=int, action="append")
    ana.add_argument("--mode", choices=("independent", "nested"), default="independent")
    ana.add_argument("--paper-goldens", action="store_true",
                     help="ingest a hand-entered pass table instead of counts")
    ana.add_argument("--pass-table", help="pass-surface CSV to ingest")
    ana.add_argument("--marginals", help="hand-entered marginal CSV for budget rows")
    ana.set_defaults(func=cmd_analyze)

    mech = sub.add_parser("mechanism", help="diversity, perplexity, prompts")
    mech.add_argument(
        "--trajectories", required=True, type=_id_path, metavar="ID=PATH"
    )
    mech.add_argument("--reference", type=_id_path, metavar="ID=PATH")
    mech.add_argument("--novelty", action="store_true")
    mech.add_argument("--nll", help="token NLL records JSONL")
    mech.add_argument("--problems", action="append")
    mech.add_argument("--out", required=True)
    mech.set_defaults(func=cmd_mechanism)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "epsilon", None) is not None and not args.epsilon:
        args.epsilon = [0.02]
    if hasattr(args, "epsilon") and args.epsilon is None:
        args.epsilon = [0.02]
    if hasattr(args, "subsample") and args.subsample is None:
        args.subsample = [32, 48]
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
