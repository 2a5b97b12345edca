"""FairGen orchestration: grow a dataset toward even property-space coverage.

One iteration trains the mixture-density ensemble on the current dataset,
picks a batch of target properties that maximizes coverage gain minus an
uncertainty penalty, draws candidate shapes from every ensemble member at
every target, filters infeasible shapes and property outliers, and appends
the simulated survivors.  On top of that loop sit two study protocols:
``compare_samplers`` (coverage growth versus plain grid/LHS sampling at
matched sample counts) and ``evaluate_generative`` (inverse-design accuracy
of MDNs trained on different datasets).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import mdn
from .bayesopt import BoConfig, optimize_targets, save_trace_csv
from .coverage import CoverageConfig, coverage_score
from .ensemble import match_components, train_ensemble
from .errors import (
    ConfigError,
    DataFormatError,
    DomainError,
    EvaluationError,
)
from .problem import (
    Dataset,
    DesignRecord,
    get_problem,
    grid_sample,
    initialize_dataset,
    lhs_sample,
    load_dataset,
    save_dataset,
)
from .serialize import dumps_17g

DEFAULT_SAMPLES_PER_TARGET_PER_MODEL = 3


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Everything a full FairGen run needs, including the master seed."""

    problem: str = "synthetic"
    init_sampler: str = "grid"
    init_size: int = 200
    iterations: int = 10
    members: int = 5
    samples_per_target_per_model: int = DEFAULT_SAMPLES_PER_TARGET_PER_MODEL
    mdn: mdn.MdnConfig = field(default_factory=mdn.MdnConfig)
    bo: BoConfig = field(default_factory=BoConfig)
    cov: CoverageConfig = field(default_factory=CoverageConfig)
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.init_sampler not in ("grid", "lhs"):
            raise ConfigError(
                f"init_sampler must be 'grid' or 'lhs', got {self.init_sampler!r}"
            )
        for name in ("init_size", "iterations", "members", "samples_per_target_per_model"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be a nonnegative integer, got {self.master_seed!r}")


def config_snapshot(config: RunConfig) -> dict:
    """Plain-dict image of a RunConfig, suitable for JSON persistence."""
    snap = dataclasses.asdict(config)
    snap["cov"]["box"] = list(config.cov.box)
    return snap


def config_from_snapshot(snap: dict) -> RunConfig:
    try:
        return RunConfig(
            problem=snap["problem"],
            init_sampler=snap["init_sampler"],
            init_size=snap["init_size"],
            iterations=snap["iterations"],
            members=snap["members"],
            samples_per_target_per_model=snap["samples_per_target_per_model"],
            mdn=mdn.MdnConfig(**snap["mdn"]),
            bo=BoConfig(**snap["bo"]),
            cov=CoverageConfig(
                rho=snap["cov"]["rho"],
                k=snap["cov"]["k"],
                box=tuple(snap["cov"]["box"]),
                raster_h=snap["cov"]["raster_h"],
            ),
            master_seed=snap["master_seed"],
        )
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"malformed run-config snapshot: {exc}") from exc


# ---------------------------------------------------------------------------
# iteration records and the run ledger


@dataclass
class IterationRecord:
    """Audit record of one FairGen iteration.

    ``appended == generated - infeasible - outliers`` always holds, and
    ``sc_after >= sc_before`` (appending designs never shrinks coverage).
    ``timings`` carries wall-clock seconds per phase; it is reported
    separately from the deterministic ledger line.
    """

    index: int
    sc_before: float
    sc_after: float
    targets: np.ndarray
    su: float
    generated: int
    infeasible: int
    outliers: int
    appended: int
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.targets = np.asarray(self.targets, dtype=float)
        if self.index < 1:
            raise ConfigError(f"iteration index must be >= 1, got {self.index}")
        counts = (self.generated, self.infeasible, self.outliers, self.appended)
        if any(c < 0 for c in counts):
            raise ConfigError(f"negative candidate count in iteration record: {counts}")
        if self.appended != self.generated - self.infeasible - self.outliers:
            raise ConfigError(
                "candidate accounting broken: "
                f"appended={self.appended} != generated={self.generated} "
                f"- infeasible={self.infeasible} - outliers={self.outliers}"
            )
        if self.sc_after < self.sc_before:
            raise ConfigError(
                f"coverage decreased within an iteration: {self.sc_before} -> {self.sc_after}"
            )

    def to_public_dict(self) -> dict:
        """Deterministic fields only (timings vary run to run)."""
        return {
            "iteration": self.index,
            "sc_before": self.sc_before,
            "sc_after": self.sc_after,
            "targets": self.targets.tolist(),
            "su": self.su,
            "generated": self.generated,
            "infeasible": self.infeasible,
            "outliers": self.outliers,
            "appended": self.appended,
        }


@dataclass
class RunLedger:
    """Ordered iteration records plus the run's config snapshot."""

    records: list[IterationRecord]
    dataset_path: str | None
    config: dict

    def __post_init__(self) -> None:
        for pos, rec in enumerate(self.records, start=1):
            if rec.index != pos:
                raise ConfigError(
                    f"ledger iteration indices must be contiguous from 1; "
                    f"position {pos} holds index {rec.index}"
                )


def save_ledger(records: Sequence[IterationRecord], path: str | Path) -> None:
    """One JSON line per iteration, floats at 17 significant digits."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    lines = [dumps_17g(rec.to_public_dict()) for rec in records]
    tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    tmp.replace(path)


def load_ledger(path: str | Path) -> list[IterationRecord]:
    path = Path(path)
    records: list[IterationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    IterationRecord(
                        index=obj["iteration"],
                        sc_before=obj["sc_before"],
                        sc_after=obj["sc_after"],
                        targets=np.asarray(obj["targets"], dtype=float),
                        su=obj["su"],
                        generated=obj["generated"],
                        infeasible=obj["infeasible"],
                        outliers=obj["outliers"],
                        appended=obj["appended"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ConfigError) as exc:
                raise DataFormatError(f"{path}, line {lineno}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# one FairGen iteration


def _sample_seed(iteration_seed: int, target_idx: int, member_idx: int) -> int:
    """Stable per-(target, member) stream for candidate-shape sampling."""
    ss = np.random.SeedSequence([iteration_seed, target_idx, member_idx])
    return int(ss.generate_state(1)[0])


def run_iteration(
    dataset: Dataset,
    config: RunConfig,
    iteration_seed: int,
    index: int,
    on_trace: Callable | None = None,
) -> tuple[Dataset, IterationRecord]:
    """Grow ``dataset`` by one adaptive batch; returns a new Dataset.

    The input dataset is never mutated, so any failure (ensemble training
    included) leaves it unchanged.  ``on_trace`` receives the target-search
    trace records for optional export.
    """
    problem = get_problem(dataset.problem_id)
    X = dataset.active_std_properties()
    Y = dataset.active_shapes()
    if X.shape[0] == 0:
        raise DomainError("cannot iterate on a dataset with no feasible records")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    ensemble = train_ensemble(X, Y, config.mdn, base_seed=iteration_seed, members=config.members)
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    corr = match_components(ensemble, X)
    timings["match"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    bo_cfg = dataclasses.replace(config.bo, seed=iteration_seed)
    result = optimize_targets(X, ensemble, corr, bo_cfg, config.cov)
    timings["optimize"] = time.perf_counter() - t0
    if on_trace is not None:
        on_trace(result.trace)
    sc_before = coverage_score(X, config.cov)

    t0 = time.perf_counter()
    per_count = config.samples_per_target_per_model
    chunks = []
    for t_idx, target in enumerate(result.batch):
        for m_idx, model in enumerate(ensemble.members):
            seed = _sample_seed(iteration_seed, t_idx, m_idx)
            chunks.append(
                mdn.sample_shapes(model, target, per_count, seed, problem.shape_bounds)
            )
    candidates = np.vstack(chunks)
    generated = candidates.shape[0]
    timings["generate"] = time.perf_counter() - t0

    feasible_mask = np.array([problem.feasibility(x) for x in candidates], dtype=bool)
    n_infeasible = int(np.count_nonzero(~feasible_mask))
    survivors = candidates[feasible_mask]

    t0 = time.perf_counter()
    if survivors.shape[0]:
        raw = problem.evaluate_many(survivors)
        std = dataset.standardizer.apply(raw)
    else:
        raw = np.zeros((0, problem.p))
        std = raw
    timings["simulate"] = time.perf_counter() - t0

    xmin, xmax, ymin, ymax = config.cov.box
    in_box = (
        (std[:, 0] >= xmin) & (std[:, 0] <= xmax) & (std[:, 1] >= ymin) & (std[:, 1] <= ymax)
    )
    n_outliers = int(np.count_nonzero(~in_box))

    t0 = time.perf_counter()
    new_records = [
        DesignRecord(
            shape=survivors[j].copy(),
            raw_properties=raw[j].copy(),
            std_properties=std[j].copy(),
            provenance=f"fairgen-iter-{index}",
            feasible=True,
        )
        for j in np.flatnonzero(in_box)
    ]
    if new_records:
        grown = Dataset(
            records=list(dataset.records) + new_records,
            standardizer=dataset.standardizer,
            problem_id=dataset.problem_id,
        )
        # appending can only add covered area; guard the recomputed score
        # against sub-1e-12 float noise from re-tiling the Voronoi cells
        sc_after = max(coverage_score(grown.active_std_properties(), config.cov), sc_before)
    else:
        grown = dataset
        sc_after = sc_before
    timings["append"] = time.perf_counter() - t0

    record = IterationRecord(
        index=index,
        sc_before=sc_before,
        sc_after=sc_after,
        targets=result.batch,
        su=result.su,
        generated=generated,
        infeasible=n_infeasible,
        outliers=n_outliers,
        appended=len(new_records),
        timings=timings,
    )
    return grown, record


# ---------------------------------------------------------------------------
# full run with persistence and crash resume


def run(config: RunConfig, out_dir: str | Path) -> RunLedger:
    """Initialize (or resume) a run directory and execute all iterations.

    The dataset CSV and the ledger are rewritten atomically after every
    iteration, so an interrupted run re-invoked on the same directory
    continues from the last completed iteration and ends bitwise-identical
    to an uninterrupted one.  Iteration ``i`` is seeded ``master_seed ^ i``
    regardless of history.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset_path = out / "dataset.csv"
    ledger_path = out / "ledger.jsonl"
    config_path = out / "config.json"
    timings_path = out / "timings.jsonl"

    snapshot = config_snapshot(config)
    if config_path.exists():
        on_disk = json.loads(config_path.read_text(encoding="utf-8"))
        if dumps_17g(on_disk) != dumps_17g(snapshot):
            raise ConfigError(
                f"{out} holds a run with a different configuration; "
                "refusing to mix states"
            )
    else:
        tmp = config_path.with_suffix(".json.tmp")
        tmp.write_text(dumps_17g(snapshot, indent=2) + "\n", encoding="utf-8")
        tmp.replace(config_path)

    if dataset_path.exists():
        dataset, _ = load_dataset(dataset_path)
        if dataset.problem_id != config.problem:
            raise ConfigError(
                f"dataset problem {dataset.problem_id!r} != configured {config.problem!r}"
            )
        records = load_ledger(ledger_path) if ledger_path.exists() else []
    else:
        problem = get_problem(config.problem)
        dataset = initialize_dataset(
            problem, config.init_sampler, config.init_size, seed=config.master_seed
        )
        save_dataset(dataset, dataset_path, creation_seed=config.master_seed)
        records = []

    for i in range(len(records) + 1, config.iterations + 1):
        iteration_seed = config.master_seed ^ i
        trace_path = out / f"bo-trace-iter-{i}.csv"
        dataset, record = run_iteration(
            dataset,
            config,
            iteration_seed,
            i,
            on_trace=lambda trace, p=trace_path: save_trace_csv(trace, p),
        )
        records.append(record)
        save_dataset(dataset, dataset_path, creation_seed=config.master_seed)
        save_ledger(records, ledger_path)
        with open(timings_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"iteration": i, **record.timings}) + "\n")

    return RunLedger(records=records, dataset_path=str(dataset_path), config=snapshot)


# ---------------------------------------------------------------------------
# sampler comparison at matched sample counts


@dataclass
class CurvePoint:
    sample_count: int
    method: str
    score: float


@dataclass
class CompareResult:
    points: list[CurvePoint]
    final_dataset: Dataset | None = None

    def curve(self, method: str) -> list[tuple[int, float]]:
        return [(p.sample_count, p.score) for p in self.points if p.method == method]


def _feasible_grid_pool(problem, min_count: int, start_levels: int, rng) -> np.ndarray:
    """Feasible grid designs grown by refinement, >= min_count rows.

    Grid sampling under a growing budget means running complete grids at
    successively finer levels, so the pool is the concatenation of whole
    grids (start_levels, start_levels+1, ...).  Each block is shuffled
    internally: a sorted prefix would sweep one axis and misrepresent a
    partially spent block.
    """
    levels = max(1, start_levels)
    blocks: list[np.ndarray] = []
    total = 0
    while total < min_count:
        shapes = grid_sample(levels, problem.shape_bounds)
        feasible = np.array([problem.feasibility(x) for x in shapes], dtype=bool)
        block = shapes[feasible]
        blocks.append(block[rng.permutation(block.shape[0])])
        total += block.shape[0]
        levels += 1
    return np.vstack(blocks)


def _feasible_lhs_pool(problem, min_count: int, seed: int) -> np.ndarray:
    """Feasible subsequence of one LHS draw, grown until >= min_count rows."""
    n = min_count
    while True:
        shapes = lhs_sample(n, seed, problem.shape_bounds)
        feasible = np.array([problem.feasibility(x) for x in shapes], dtype=bool)
        pool = shapes[feasible]
        if pool.shape[0] >= min_count:
            return pool
        n = int(np.ceil(n * 1.25)) + 8


def compare_samplers(config: RunConfig, total_budget: int) -> CompareResult:
    """Coverage-growth curves: adaptive run vs plain grid vs plain LHS.

    All three methods are scored with ``config.cov`` in the standardized
    frame fitted on the adaptive run's initial dataset, at the adaptive
    run's feasible sample counts.  Baselines take prefixes of one fixed
    feasible pool per method, so every curve is non-decreasing by
    construction.
    """
    problem = get_problem(config.problem)
    dataset = initialize_dataset(
        problem, config.init_sampler, config.init_size, seed=config.master_seed
    )
    standardizer = dataset.standardizer
    init_count = dataset.active_std_properties().shape[0]
    if total_budget < init_count:
        raise DomainError(
            f"total_budget {total_budget} is below the initial feasible count {init_count}"
        )

    points: list[CurvePoint] = []
    sc = coverage_score(dataset.active_std_properties(), config.cov)
    checkpoints = [init_count]
    points.append(CurvePoint(init_count, "fairgen", sc))
    for i in range(1, config.iterations + 1):
        if dataset.active_std_properties().shape[0] >= total_budget:
            break
        dataset, record = run_iteration(dataset, config, config.master_seed ^ i, i)
        count = dataset.active_std_properties().shape[0]
        checkpoints.append(count)
        points.append(CurvePoint(count, "fairgen", record.sc_after))

    max_count = max(checkpoints)
    grid_rng = np.random.default_rng([config.master_seed, 7919])
    start_levels = max(1, round(config.init_size ** (1.0 / problem.d)))
    grid_pool = _feasible_grid_pool(problem, max_count, start_levels, grid_rng)
    lhs_seed = int(np.random.SeedSequence([config.master_seed, 104729]).generate_state(1)[0])
    lhs_pool = _feasible_lhs_pool(problem, max_count, lhs_seed)

    for method, pool in (("grid", grid_pool), ("lhs", lhs_pool)):
        raw = problem.evaluate_many(pool[:max_count])
        std = standardizer.apply(raw)
        for count in checkpoints:
            points.append(CurvePoint(count, method, coverage_score(std[:count], config.cov)))
    return CompareResult(points=points, final_dataset=dataset)


def save_curves_csv(points: Sequence[CurvePoint], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    lines = ["sample_count,method,score"]
    for p in points:
        lines.append(f"{p.sample_count},{p.method},{p.score:.17g}")
    tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    tmp.replace(path)


def load_curves_csv(path: str | Path) -> list[CurvePoint]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "sample_count,method,score":
        raise DataFormatError(f"{path}, line 1: expected header 'sample_count,method,score'")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataFormatError(f"{path}, line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            points.append(CurvePoint(int(parts[0]), parts[1], float(parts[2])))
        except ValueError as exc:
            raise DataFormatError(f"{path}, line {lineno}: {exc}") from exc
    return points


# ---------------------------------------------------------------------------
# generative-accuracy evaluation


@dataclass
class MaeRow:
    label: str
    mae: float
    n_pairs: int


@dataclass
class GenerativeEvaluation:
    rows: list[MaeRow]
    test_properties: np.ndarray
    scatter: dict[str, np.ndarray]  # label -> (n_pairs, p) absolute errors


def _standardizers_match(datasets: Sequence[tuple[str, Dataset]]) -> bool:
    ref = datasets[0][1].standardizer
    for _, ds in datasets[1:]:
        s = ds.standardizer
        if not (
            np.allclose(s.mean, ref.mean, rtol=0, atol=1e-12)
            and np.allclose(s.std, ref.std, rtol=0, atol=1e-12)
        ):
            return False
    return True


def sample_covered_properties(
    pooled_std: np.ndarray,
    n: int,
    rng: np.random.Generator,
    cov_config: CoverageConfig,
) -> np.ndarray:
    """Uniform draws from the covered region, by rejection against the pool.

    Raises EvaluationError when the acceptance rate falls below 0.1% (the
    covered region is too small a sliver of the box to sample sensibly).
    """
    xmin, xmax, ymin, ymax = cov_config.box
    tree = cKDTree(np.asarray(pooled_std, dtype=float))
    accepted: list[np.ndarray] = []
    n_drawn = 0
    max_draws = max(50_000, 1000 * n)
    while sum(a.shape[0] for a in accepted) < n and n_drawn < max_draws:
        chunk = rng.uniform((xmin, ymin), (xmax, ymax), size=(4096, 2))
        n_drawn += chunk.shape[0]
        counts = tree.query_ball_point(chunk, r=cov_config.rho, return_length=True)
        accepted.append(chunk[counts >= cov_config.k])
    pts = np.vstack(accepted) if accepted else np.zeros((0, 2))
    if pts.shape[0] < n:
        rate = pts.shape[0] / n_drawn if n_drawn else 0.0
        raise EvaluationError(
            f"covered region too small for rejection sampling: acceptance "
            f"rate {rate:.5%} after {n_drawn} draws (need >= 0.1%)"
        )
    return pts[:n]


def evaluate_generative(
    datasets: Sequence[tuple[str, Dataset]],
    n_test: int = 50,
    shapes_per_test: int = 10,
    seed: int = 0,
    mdn_config: mdn.MdnConfig | None = None,
    cov_config: CoverageConfig | None = None,
) -> GenerativeEvaluation:
    """Score one MDN per dataset on a shared inverse-design test set.

    Test properties are drawn once, uniformly from the region covered by the
    pooled datasets, so every MDN faces the identical task; that requires all
    datasets to share one standardizer.  Each MDN generates
    ``shapes_per_test`` shapes per test property; every shape is simulated
    and its standardized properties compared to the target.  A pair's error
    is the mean absolute error across property axes; a dataset's MAE
    averages over all pairs.
    """
    if not datasets:
        raise DomainError("need at least one (label, dataset) pair")
    if cov_config is None:
        cov_config = CoverageConfig()
    if mdn_config is None:
        mdn_config = mdn.MdnConfig(seed=seed)
    if not _standardizers_match(datasets):
        raise DomainError(
            "datasets must share one standardizer so test properties mean "
            "the same raw targets for every model"
        )

    pooled = np.vstack([ds.active_std_properties() for _, ds in datasets])
    rng = np.random.default_rng([seed, 1])
    tests = sample_covered_properties(pooled, n_test, rng, cov_config)

    rows: list[MaeRow] = []
    scatter: dict[str, np.ndarray] = {}
    for ds_idx, (label, ds) in enumerate(datasets):
        problem = get_problem(ds.problem_id)
        model = mdn.train(ds.active_std_properties(), ds.active_shapes(), mdn_config)
        per_axis_errors = []
        for t_idx, target in enumerate(tests):
            shape_seed = int(
                np.random.SeedSequence([seed, ds_idx, t_idx]).generate_state(1)[0]
            )
            shapes = mdn.sample_shapes(
                model, target, shapes_per_test, shape_seed, problem.shape_bounds
            )
            raw = problem.evaluate_many(shapes)
            std = ds.standardizer.apply(raw)
            per_axis_errors.append(np.abs(std - target[None, :]))
        errors = np.vstack(per_axis_errors)
        rows.append(MaeRow(label=label, mae=float(errors.mean()), n_pairs=errors.shape[0]))
        scatter[label] = errors
    return GenerativeEvaluation(rows=rows, test_properties=tests, scatter=scatter)
