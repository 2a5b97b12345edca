"""Design-problem abstraction, the built-in synthetic problem, and datasets.

Shapes are length-``d`` float vectors of normalized geometric parameters,
properties are length-``p`` float vectors of simulated responses.  The
built-in problem uses d=4, p=2 with an analytic property map whose image is
deliberately skewed and folded, so uniform shape sampling under-populates
parts of the property space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataFormatError, DegenerateDataError, DomainError

TWO_PI = 2.0 * math.pi


def _fmt(v: float) -> str:
    """17 significant digits: lossless float64 round trip."""
    return format(float(v), ".17g")


@dataclass
class ProblemSpec:
    """A design problem: shape space, property evaluation, feasibility."""

    name: str
    d: int
    p: int
    shape_bounds: np.ndarray  # (d, 2) per-axis [lo, hi]
    evaluate: Callable[[np.ndarray], np.ndarray]
    feasibility: Callable[[np.ndarray], bool]

    def in_bounds(self, shape: np.ndarray) -> bool:
        x = np.asarray(shape, dtype=float)
        if x.shape != (self.d,):
            return False
        return bool(
            np.all(np.isfinite(x))
            and np.all(x >= self.shape_bounds[:, 0])
            and np.all(x <= self.shape_bounds[:, 1])
        )

    def evaluate_many(self, shapes: np.ndarray) -> np.ndarray:
        shapes = np.asarray(shapes, dtype=float)
        return np.array([self.evaluate(x) for x in shapes], dtype=float)


def evaluate_synthetic(x: np.ndarray) -> np.ndarray:
    """Analytic property map of the built-in problem.

    p1 = exp(1.5*x1*x2) - x3^2
    p2 = 2*x1^2 + x3*x4 + 0.3*sin(2*pi*x2)

    Deterministic; raises DomainError outside [0, 1]^4.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (4,):
        raise DomainError(f"expected a 4-vector, got shape {x.shape}")
    if not (np.all(np.isfinite(x)) and np.all(x >= 0.0) and np.all(x <= 1.0)):
        raise DomainError(f"shape {x.tolist()} outside [0, 1]^4")
    p1 = math.exp(1.5 * x[0] * x[1]) - x[2] * x[2]
    p2 = 2.0 * x[0] * x[0] + x[2] * x[3] + 0.3 * math.sin(TWO_PI * x[1])
    return np.array([p1, p2])


def feasibility_synthetic(x: np.ndarray) -> bool:
    """Manufacturability analog: inside the unit cube and x2 + x3 <= 1.6."""
    x = np.asarray(x, dtype=float)
    if x.shape != (4,) or not np.all(np.isfinite(x)):
        return False
    if np.any(x < 0.0) or np.any(x > 1.0):
        return False
    return bool(x[1] + x[2] <= 1.6)


def synthetic_problem() -> ProblemSpec:
    bounds = np.array([[0.0, 1.0]] * 4)
    return ProblemSpec(
        name="synthetic",
        d=4,
        p=2,
        shape_bounds=bounds,
        evaluate=evaluate_synthetic,
        feasibility=feasibility_synthetic,
    )


_PROBLEMS: dict[str, Callable[[], ProblemSpec]] = {"synthetic": synthetic_problem}


def get_problem(name: str) -> ProblemSpec:
    try:
        return _PROBLEMS[name]()
    except KeyError:
        raise DomainError(f"unknown problem {name!r}; known: {sorted(_PROBLEMS)}") from None


# ---------------------------------------------------------------------------
# samplers


def grid_sample(levels_per_axis: int, bounds: np.ndarray) -> np.ndarray:
    """Cartesian grid with equally spaced levels per axis (endpoints included).

    levels = 1 degenerates to a single point at the axis midpoints.
    """
    if levels_per_axis < 1:
        raise DomainError("levels_per_axis must be >= 1")
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    axes = []
    for j in range(d):
        lo, hi = bounds[j]
        if levels_per_axis == 1:
            axes.append(np.array([0.5 * (lo + hi)]))
        else:
            axes.append(np.linspace(lo, hi, levels_per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def grid_levels_for(n: int, d: int) -> int:
    """Nearest per-axis level count so that levels**d approximates n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return max(1, round(n ** (1.0 / d)))


def lhs_unit(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube in [0, 1]^dims: one sample per axis stratum."""
    if n < 1:
        raise DomainError("n must be >= 1")
    out = np.empty((n, dims))
    for j in range(dims):
        perm = rng.permutation(n)
        out[:, j] = (perm + rng.random(n)) / n
    return out


def lhs_sample(n: int, seed: int, bounds: np.ndarray) -> np.ndarray:
    """Latin hypercube sample of the shape space; deterministic per seed."""
    bounds = np.asarray(bounds, dtype=float)
    rng = np.random.default_rng(seed)
    unit = lhs_unit(n, bounds.shape[0], rng)
    return bounds[:, 0] + unit * (bounds[:, 1] - bounds[:, 0])


# ---------------------------------------------------------------------------
# standardization


@dataclass
class Standardizer:
    """Frozen per-axis z-score transform fitted on the initial dataset."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.mean) / self.std

    def invert(self, std_values: np.ndarray) -> np.ndarray:
        return np.asarray(std_values, dtype=float) * self.std + self.mean


def fit_standardizer(raw_properties: np.ndarray) -> Standardizer:
    """Per-axis mean and population standard deviation.

    Raises DegenerateDataError when an axis has zero variance.
    """
    raw = np.asarray(raw_properties, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise DegenerateDataError("need at least 2 property vectors to fit")
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)  # population (ddof=0)
    if np.any(std == 0.0) or not np.all(np.isfinite(std)):
        bad = [int(j) for j in np.flatnonzero(~(std > 0.0))]
        raise DegenerateDataError(f"zero-variance property axis {bad}")
    return Standardizer(mean=mean, std=std)


# ---------------------------------------------------------------------------
# records and datasets


@dataclass
class DesignRecord:
    shape: np.ndarray
    raw_properties: np.ndarray
    std_properties: np.ndarray
    provenance: str
    feasible: bool


@dataclass
class Dataset:
    """Ordered design records plus the frozen standardizer.

    ``records`` may include infeasible rows (flagged); the *active* dataset —
    what coverage scoring and model training see — is the feasible subset.
    """

    records: list[DesignRecord]
    standardizer: Standardizer
    problem_id: str

    def __len__(self) -> int:
        return len(self.records)

    @property
    def shapes(self) -> np.ndarray:
        return np.array([r.shape for r in self.records])

    @property
    def raw_properties(self) -> np.ndarray:
        return np.array([r.raw_properties for r in self.records])

    @property
    def std_properties(self) -> np.ndarray:
        return np.array([r.std_properties for r in self.records])

    @property
    def feasible_mask(self) -> np.ndarray:
        return np.array([r.feasible for r in self.records], dtype=bool)

    def active_shapes(self) -> np.ndarray:
        return np.array([r.shape for r in self.records if r.feasible])

    def active_std_properties(self) -> np.ndarray:
        return np.array([r.std_properties for r in self.records if r.feasible])

    def append(self, records: Iterable[DesignRecord]) -> None:
        self.records.extend(records)


def make_records(
    shapes: np.ndarray,
    problem: ProblemSpec,
    standardizer: Standardizer | None,
    provenance: str,
) -> list[DesignRecord]:
    """Evaluate shapes and build records; standardizer may be fitted later."""
    records = []
    for x in np.asarray(shapes, dtype=float):
        raw = problem.evaluate(x)
        std = standardizer.apply(raw) if standardizer is not None else np.full_like(raw, np.nan)
        records.append(
            DesignRecord(
                shape=x.copy(),
                raw_properties=raw,
                std_properties=std,
                provenance=provenance,
                feasible=problem.feasibility(x),
            )
        )
    return records


def initialize_dataset(
    problem: ProblemSpec,
    sampler: str,
    n: int,
    seed: int,
) -> Dataset:
    """Sample the shape space, simulate, and fit the frozen standardizer.

    ``sampler`` is "grid" (levels = round(n**(1/d)), actual count levels**d)
    or "lhs" (count exactly n).  All sampled designs are recorded; infeasible
    ones are flagged and excluded from the active dataset.  The standardizer
    is fitted on the feasible records only.
    """
    if sampler == "grid":
        shapes = grid_sample(grid_levels_for(n, problem.d), problem.shape_bounds)
        provenance = "init-grid"
    elif sampler == "lhs":
        shapes = lhs_sample(n, seed, problem.shape_bounds)
        provenance = "init-lhs"
    else:
        raise DomainError(f"unknown sampler {sampler!r}; use 'grid' or 'lhs'")
    records = make_records(shapes, problem, None, provenance)
    feas_raw = np.array([r.raw_properties for r in records if r.feasible])
    if feas_raw.shape[0] < 2:
        raise DegenerateDataError("fewer than 2 feasible designs in the initial sample")
    standardizer = fit_standardizer(feas_raw)
    for r in records:
        r.std_properties = standardizer.apply(r.raw_properties)
    return Dataset(records=records, standardizer=standardizer, problem_id=problem.name)


# ---------------------------------------------------------------------------
# persistence: CSV + JSON sidecar, floats at 17 significant digits


def sidecar_path_for(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def save_dataset(
    dataset: Dataset,
    csv_path: str | Path,
    creation_seed: int,
    sidecar_path: str | Path | None = None,
) -> None:
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = sidecar_path_for(csv_path)
    n_rec = len(dataset.records)
    d = dataset.records[0].shape.shape[0] if n_rec else 0
    p = dataset.standardizer.mean.shape[0]
    header = (
        [f"x{j + 1}" for j in range(d)]
        + [f"p{j + 1}_raw" for j in range(p)]
        + [f"p{j + 1}" for j in range(p)]
        + ["provenance", "feasible"]
    )
    lines = [",".join(header)]
    for r in dataset.records:
        cells = (
            [_fmt(v) for v in r.shape]
            + [_fmt(v) for v in r.raw_properties]
            + [_fmt(v) for v in r.std_properties]
            + [r.provenance, "true" if r.feasible else "false"]
        )
        lines.append(",".join(cells))
    tmp = csv_path.with_name(csv_path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(csv_path)

    mean = ",".join(_fmt(v) for v in dataset.standardizer.mean)
    std = ",".join(_fmt(v) for v in dataset.standardizer.std)
    sidecar = (
        "{\n"
        f'  "problem": {json.dumps(dataset.problem_id)},\n'
        f'  "d": {d},\n'
        f'  "p": {p},\n'
        f'  "standardizer": {{"mean": [{mean}], "std": [{std}]}},\n'
        f'  "creation_seed": {int(creation_seed)}\n'
        "}\n"
    )
    sp = Path(sidecar_path)
    tmp = sp.with_name(sp.name + ".tmp")
    tmp.write_text(sidecar)
    tmp.replace(sp)


def load_dataset(
    csv_path: str | Path,
    sidecar_path: str | Path | None = None,
) -> tuple[Dataset, int]:
    """Load a dataset CSV plus sidecar; returns (dataset, creation_seed)."""
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = sidecar_path_for(csv_path)
    try:
        meta = json.loads(Path(sidecar_path).read_text())
        d = int(meta["d"])
        p = int(meta["p"])
        standardizer = Standardizer(
            mean=np.array(meta["standardizer"]["mean"], dtype=float),
            std=np.array(meta["standardizer"]["std"], dtype=float),
        )
        problem_id = str(meta["problem"])
        creation_seed = int(meta["creation_seed"])
    except FileNotFoundError:
        raise DataFormatError(f"missing sidecar {sidecar_path}") from None
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"malformed sidecar {sidecar_path}: {exc}") from None
    if standardizer.mean.shape != (p,) or standardizer.std.shape != (p,):
        raise DataFormatError(f"sidecar standardizer shape does not match p={p}")

    expected_cols = d + 2 * p + 2
    records: list[DesignRecord] = []
    try:
        text = csv_path.read_text()
    except FileNotFoundError:
        raise DataFormatError(f"missing dataset file {csv_path}") from None
    lines = text.splitlines()
    if not lines:
        raise DataFormatError(f"{csv_path}: line 1: empty file")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != expected_cols:
            raise DataFormatError(
                f"{csv_path}: line {lineno}: expected {expected_cols} columns, got {len(cells)}"
            )
        try:
            shape = np.array([float(v) for v in cells[:d]])
            raw = np.array([float(v) for v in cells[d : d + p]])
            std = np.array([float(v) for v in cells[d + p : d + 2 * p]])
        except ValueError as exc:
            raise DataFormatError(f"{csv_path}: line {lineno}: {exc}") from None
        provenance = cells[d + 2 * p]
        feas_tok = cells[d + 2 * p + 1].strip().lower()
        if feas_tok not in ("true", "false"):
            raise DataFormatError(
                f"{csv_path}: line {lineno}: feasible must be true/false, got {feas_tok!r}"
            )
        records.append(
            DesignRecord(
                shape=shape,
                raw_properties=raw,
                std_properties=std,
                provenance=provenance,
                feasible=feas_tok == "true",
            )
        )
    if not records:
        raise DataFormatError(f"{csv_path}: no data rows")
    return Dataset(records=records, standardizer=standardizer, problem_id=problem_id), creation_seed
