"""Command-line front end for dataset building, runs, reports, and plots.

Exit codes: 0 success, 1 runtime failure (bad data, impossible request),
2 usage error (bad flags, bad config file, invalid run configuration).
Option values override config-file values; the FAIRGEN_SEED environment
variable is the lowest-precedence seed source.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np
import tomli

from .bayesopt import BoConfig
from .coverage import CoverageConfig, coverage_report
from .ensemble import heatmap, match_components, save_heatmap_csv, train_ensemble
from .errors import ConfigError, FairGenError
from .mdn import MdnConfig
from .pipeline import (
    RunConfig,
    compare_samplers,
    config_from_snapshot,
    config_snapshot,
    evaluate_generative,
    load_ledger,
    run,
    save_curves_csv,
)
from .problem import (
    get_problem,
    initialize_dataset,
    load_dataset,
    save_dataset,
    sidecar_path_for,
)
from .svgplot import coverage_map_svg, heatmap_svg, line_plot_svg, scatter_svg

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_SUBCONFIG_FIELDS = {
    "mdn": {f.name for f in dataclasses.fields(MdnConfig)},
    "bo": {f.name for f in dataclasses.fields(BoConfig)},
    "cov": {f.name for f in dataclasses.fields(CoverageConfig)},
}
_TOP_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


# ---------------------------------------------------------------------------
# configuration sources: defaults < config file < flags; seed also reads env


def _load_config_file(path: str) -> dict:
    """TOML -> nested dict with unknown keys rejected (usage error)."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    for key, value in data.items():
        if key in _SUBCONFIG_FIELDS:
            unknown = set(value) - _SUBCONFIG_FIELDS[key]
            if unknown:
                raise ConfigError(
                    f"config file {path}: unknown [{key}] keys: {sorted(unknown)}"
                )
        elif key not in _TOP_FIELDS:
            raise ConfigError(f"config file {path}: unknown key {key!r}")
    return data


def _build_run_config(config_path: str | None, **overrides) -> RunConfig:
    """Merge defaults, config file, and non-None flag overrides."""
    snap = config_snapshot(RunConfig())
    if config_path is not None:
        for key, value in _load_config_file(config_path).items():
            if key in _SUBCONFIG_FIELDS:
                snap[key].update(value)
            else:
                snap[key] = value
    for key, value in overrides.items():
        if value is not None:
            snap[key] = value
    try:
        return config_from_snapshot(snap)
    except FairGenError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_seed(flag_seed: int | None, config_seed: int | None = None) -> int:
    if flag_seed is not None:
        return flag_seed
    if config_seed is not None:
        return config_seed
    env = os.environ.get("FAIRGEN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"FAIRGEN_SEED must be an integer, got {env!r}") from exc
    return 0


def _config_file_seed(config_path: str | None) -> int | None:
    if config_path is None:
        return None
    return _load_config_file(config_path).get("master_seed")


# ---------------------------------------------------------------------------
# subcommands


def cmd_init(args) -> int:
    seed = _resolve_seed(args.seed)
    problem = get_problem(args.problem)
    dataset = initialize_dataset(problem, args.sampler, args.n, seed=seed)
    save_dataset(dataset, args.out, creation_seed=seed)
    sc = coverage_report(dataset.active_std_properties(), CoverageConfig()).score
    print(f"wrote {args.out}: n={len(dataset.records)} "
          f"feasible={dataset.active_std_properties().shape[0]} S_C={sc:.6g}")
    return EXIT_OK


def _emit_iteration_maps(out_dir: Path, config: RunConfig) -> None:
    """One coverage-map SVG per iteration from the persisted run state."""
    dataset, _ = load_dataset(out_dir / "dataset.csv")
    records = load_ledger(out_dir / "ledger.jsonl")

    def iter_tag(provenance: str) -> int:
        if provenance.startswith("fairgen-iter-"):
            return int(provenance.rsplit("-", 1)[1])
        return 0

    active = [r for r in dataset.records if r.feasible]
    for rec in records:
        existing = np.array(
            [r.std_properties for r in active if iter_tag(r.provenance) < rec.index]
        )
        generated = np.array(
            [r.std_properties for r in active if iter_tag(r.provenance) == rec.index]
        )
        doc = coverage_map_svg(
            existing,
            config.cov,
            generated=generated if generated.size else None,
            targets=rec.targets,
        )
        (out_dir / f"coverage-iter-{rec.index}.svg").write_text(doc, encoding="utf-8")


def cmd_run(args) -> int:
    config = _build_run_config(
        args.config,
        iterations=args.iters,
        master_seed=_resolve_seed(args.seed, _config_file_seed(args.config)),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target_csv = out_dir / "dataset.csv"
    if args.data is not None and not target_csv.exists():
        # sidecar first: the CSV's presence is the marker that the copy is done
        shutil.copyfile(sidecar_path_for(args.data), sidecar_path_for(target_csv))
        shutil.copyfile(args.data, target_csv)
    ledger = run(config, out_dir)
    _emit_iteration_maps(out_dir, config)
    final_sc = ledger.records[-1].sc_after if ledger.records else float("nan")
    print(f"run complete: {len(ledger.records)} iterations, final S_C={final_sc:.6g}")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_coverage(args) -> int:
    dataset, _ = load_dataset(args.data)
    config = CoverageConfig(rho=args.rho, k=args.k)
    pts = dataset.active_std_properties()
    report = coverage_report(pts, config)
    print(f"n={pts.shape[0]} S_C={report.score:.6g} method={report.method} "
          f"rho={config.rho} k={config.k}")
    if args.svg is not None:
        Path(args.svg).write_text(coverage_map_svg(pts, config), encoding="utf-8")
        print(f"wrote {args.svg}")
    return EXIT_OK


def cmd_uncertainty(args) -> int:
    config = _build_run_config(
        args.config,
        master_seed=_resolve_seed(args.seed, _config_file_seed(args.config)),
    )
    dataset, _ = load_dataset(args.data)
    X = dataset.active_std_properties()
    Y = dataset.active_shapes()
    ensemble = train_ensemble(
        X, Y, config.mdn, base_seed=config.master_seed, members=config.members
    )
    corr = match_components(ensemble, X)
    field = heatmap(ensemble, corr, config.cov.box, args.resolution)
    save_heatmap_csv(field, args.csv)
    print(f"wrote {args.csv}: resolution={args.resolution} "
          f"S_U range [{field.values.min():.6g}, {field.values.max():.6g}]")
    if args.svg is not None:
        Path(args.svg).write_text(heatmap_svg(field), encoding="utf-8")
        print(f"wrote {args.svg}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _build_run_config(
        args.config,
        master_seed=_resolve_seed(args.seed, _config_file_seed(args.config)),
    )
    result = compare_samplers(config, args.budget)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves_path = out_dir / "curves.csv"
    save_curves_csv(result.points, curves_path)
    doc = line_plot_svg(
        {m: result.curve(m) for m in ("fairgen", "grid", "lhs")},
        x_label="sample count",
        y_label="coverage score",
    )
    (out_dir / "curves.svg").write_text(doc, encoding="utf-8")
    for method in ("fairgen", "grid", "lhs"):
        count, score = result.curve(method)[-1]
        print(f"{method}: final S_C={score:.6g} at n={count}")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    seed = _resolve_seed(args.seed)
    datasets = []
    seen: dict[str, int] = {}
    for path in args.data:
        dataset, _ = load_dataset(path)
        # labels key the result rows and scatter groups, so duplicate file
        # stems (a/dataset.csv, b/dataset.csv) must not collapse into one
        stem = Path(path).stem
        seen[stem] = seen.get(stem, 0) + 1
        label = stem if seen[stem] == 1 else f"{stem}-{seen[stem]}"
        datasets.append((label, dataset))
    mdn_config = None
    if args.config is not None:
        mdn_config = _build_run_config(args.config).mdn
    evaluation = evaluate_generative(
        datasets,
        n_test=args.n_test,
        shapes_per_test=args.shapes_per_test,
        seed=seed,
        mdn_config=mdn_config,
    )
    for row in evaluation.rows:
        print(f"{row.label}: MAE={row.mae:.6g} pairs={row.n_pairs}")
    if args.svg is not None:
        doc = scatter_svg(
            evaluation.scatter,
            x_label="absolute error, property 1",
            y_label="absolute error, property 2",
        )
        Path(args.svg).write_text(doc, encoding="utf-8")
        print(f"wrote {args.svg}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _resolution(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"resolution must be >= 2, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgen",
        description="Adaptive design-data generation toward even property-space coverage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="sample an initial design dataset")
    p.add_argument("--problem", default="synthetic")
    p.add_argument("--sampler", choices=("grid", "lhs"), default="grid")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="grow a dataset by adaptive iterations")
    p.add_argument("--data", default=None, help="existing dataset CSV to start from")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--config", default=None, help="TOML run configuration")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="fairgen-run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("coverage", help="score a dataset's property coverage")
    p.add_argument("--data", required=True)
    p.add_argument("--rho", type=float, default=0.08)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("uncertainty", help="map ensemble predictive uncertainty")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--resolution", type=_resolution, default=40)
    p.add_argument("--csv", default="uncertainty-heatmap.csv")
    p.add_argument("--svg", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("compare", help="coverage growth vs grid and LHS baselines")
    p.add_argument("--budget", type=_positive_int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="fairgen-compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evaluate", help="inverse-design accuracy of trained models")
    p.add_argument("--data", action="append", required=True,
                   help="dataset CSV; repeat for several datasets")
    p.add_argument("--n-test", type=_positive_int, default=50)
    p.add_argument("--shapes-per-test", type=_positive_int, default=10)
    p.add_argument("--config", default=None, help="TOML config supplying the MDN settings")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FairGenError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
