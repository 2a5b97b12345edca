"""Deep ensemble of MDNs: correspondence, aggregation, uncertainty.

M independently trained mixture networks disagree where data is scarce.
After aligning their components (mixture order is arbitrary per member),
each aligned group is summarized by one Gaussian via mixture moments; the
summed aggregated variances form the uncertainty score S_U.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import mdn
from .errors import DataFormatError, DomainError
from .serialize import fmt17

DEFAULT_MEMBERS = 5


@dataclass
class Ensemble:
    members: list[mdn.MdnModel]
    config: mdn.MdnConfig

    def __post_init__(self) -> None:
        if not self.members:
            raise DomainError("ensemble needs at least one member")
        p, d, G = self.members[0].p, self.members[0].d, self.members[0].config.components
        for m in self.members[1:]:
            if (m.p, m.d, m.config.components) != (p, d, G):
                raise DomainError("ensemble members disagree on (p, d, G)")

    @property
    def n_members(self) -> int:
        return len(self.members)


@dataclass
class Correspondence:
    """perms[m][g] = member-m component aligned with reference component g."""

    perms: np.ndarray  # (M, G) int
    total_costs: np.ndarray  # (M,) assignment cost per member (0 for reference)

    def __post_init__(self) -> None:
        for row in self.perms:
            if sorted(row.tolist()) != list(range(len(row))):
                raise DomainError("correspondence row is not a permutation")


@dataclass
class AggregatedMixture:
    means: np.ndarray  # (G, d)
    variances: np.ndarray  # (G, d), >= 0


@dataclass
class UncertaintyField:
    values: np.ndarray  # (resolution_y, resolution_x)
    box: tuple[float, float, float, float]
    xs: np.ndarray
    ys: np.ndarray


def train_ensemble(
    X: np.ndarray,
    Y: np.ndarray,
    config: mdn.MdnConfig,
    base_seed: int,
    members: int = DEFAULT_MEMBERS,
) -> Ensemble:
    """Train ``members`` models with seeds base_seed + m, m = 0..members-1."""
    if members < 1:
        raise DomainError(f"members must be >= 1, got {members}")
    trained = []
    for m in range(members):
        cfg_m = mdn.MdnConfig(
            hidden_layers=config.hidden_layers,
            hidden_width=config.hidden_width,
            components=config.components,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            variance_floor=config.variance_floor,
            seed=base_seed + m,
        )
        trained.append(mdn.train(X, Y, cfg_m))
    return Ensemble(members=trained, config=config)


def match_components(ensemble: Ensemble, X_train: np.ndarray) -> Correspondence:
    """Align member components with member 0 by mean-matrix proximity.

    Cost of pairing reference component g with member-m component g' is the
    mean squared difference of their (n, d) mean matrices over the training
    inputs; each member solves the optimal assignment.
    """
    X_train = np.asarray(X_train, dtype=float)
    if X_train.ndim != 2 or len(X_train) == 0:
        raise DomainError("X_train must be a nonempty (n, p) array")
    G = ensemble.config.components
    member_means = [mdn.forward(m, X_train).means for m in ensemble.members]
    perms = np.zeros((ensemble.n_members, G), dtype=int)
    costs = np.zeros(ensemble.n_members)
    perms[0] = np.arange(G)
    ref = member_means[0]
    for m in range(1, ensemble.n_members):
        other = member_means[m]
        # cost[g, g'] = mean over (n, d) of squared mean differences
        diff = ref[:, :, None, :] - other[:, None, :, :]
        cost = np.mean(diff * diff, axis=(0, 3))
        rows, cols = linear_sum_assignment(cost)
        perms[m, rows] = cols
        costs[m] = float(cost[rows, cols].sum())
    return Correspondence(perms=perms, total_costs=costs)


def aggregate_moments(means: np.ndarray, variances: np.ndarray) -> AggregatedMixture:
    """Single-Gaussian summary of M aligned components via mixture moments.

    ``means``/``variances`` are (M, G, d), already aligned.  The aggregated
    variance is the uniform-mixture second moment minus the squared mean,
    clamped at zero against round-off.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    mu_star = means.mean(axis=0)
    second = (variances + means * means).mean(axis=0)
    var_star = np.maximum(second - mu_star * mu_star, 0.0)
    return AggregatedMixture(means=mu_star, variances=var_star)


def _aligned_member_params(
    ensemble: Ensemble, corr: Correspondence, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked aligned means/variances: (M, n, G, d)."""
    X = np.asarray(X, dtype=float)
    means = []
    variances = []
    for m, model in enumerate(ensemble.members):
        params = mdn.forward(model, X)
        perm = corr.perms[m]
        means.append(params.means[:, perm, :])
        variances.append(params.variances[:, perm, :])
    return np.stack(means), np.stack(variances)


def aggregate(
    ensemble: Ensemble, corr: Correspondence, x: np.ndarray
) -> AggregatedMixture:
    """Aggregated per-component Gaussians at a single property point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    means, variances = _aligned_member_params(ensemble, corr, x)
    return aggregate_moments(means[:, 0], variances[:, 0])


def uncertainty_scores(
    ensemble: Ensemble, corr: Correspondence, X: np.ndarray
) -> np.ndarray:
    """S_U at each row of X: aggregated variances summed over (G, d)."""
    X = np.asarray(X, dtype=float)
    means, variances = _aligned_member_params(ensemble, corr, X)
    mu_star = means.mean(axis=0)  # (n, G, d)
    second = (variances + means * means).mean(axis=0)
    var_star = np.maximum(second - mu_star * mu_star, 0.0)
    return var_star.sum(axis=(1, 2))


def uncertainty_score(ensemble: Ensemble, corr: Correspondence, x: np.ndarray) -> float:
    """S_U at one property point; always >= 0."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(uncertainty_scores(ensemble, corr, x)[0])


def batch_uncertainty(
    ensemble: Ensemble, corr: Correspondence, batch: np.ndarray
) -> float:
    """S_U of a target batch: sum of per-point scores (order-free)."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or len(batch) == 0:
        raise DomainError("batch must be a nonempty (n_p, p) array")
    return float(uncertainty_scores(ensemble, corr, batch).sum())


def heatmap(
    ensemble: Ensemble,
    corr: Correspondence,
    box: tuple[float, float, float, float],
    resolution: int,
) -> UncertaintyField:
    """S_U sampled on a resolution x resolution grid over the box."""
    if resolution < 2:
        raise DomainError(f"resolution must be >= 2, got {resolution}")
    x0, x1, y0, y1 = box
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack((gx.ravel(), gy.ravel()))
    values = uncertainty_scores(ensemble, corr, pts).reshape(resolution, resolution)
    return UncertaintyField(values=values, box=tuple(box), xs=xs, ys=ys)


def save_heatmap_csv(field: UncertaintyField, path: str | Path) -> None:
    """Header row with grid metadata, then row-major values (17g floats)."""
    ny, nx = field.values.shape
    x0, x1, y0, y1 = field.box
    lines = ["nx,ny,xmin,xmax,ymin,ymax"]
    lines.append(
        ",".join([str(nx), str(ny), fmt17(x0), fmt17(x1), fmt17(y0), fmt17(y1)])
    )
    for row in field.values:
        lines.append(",".join(fmt17(v) for v in row))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_heatmap_csv(path: str | Path) -> UncertaintyField:
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise DataFormatError(f"missing heatmap file {path}") from None
    if len(lines) < 3 or lines[0] != "nx,ny,xmin,xmax,ymin,ymax":
        raise DataFormatError(f"{path}: not a heatmap CSV")
    try:
        meta = lines[1].split(",")
        nx, ny = int(meta[0]), int(meta[1])
        box = tuple(float(v) for v in meta[2:6])
        values = np.array(
            [[float(v) for v in line.split(",")] for line in lines[2 : 2 + ny]]
        )
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"{path}: malformed heatmap: {exc}") from None
    if values.shape != (ny, nx):
        raise DataFormatError(f"{path}: value grid shape {values.shape} != ({ny}, {nx})")
    return UncertaintyField(
        values=values,
        box=box,
        xs=np.linspace(box[0], box[1], nx),
        ys=np.linspace(box[2], box[3], ny),
    )
