"""Target-batch selection by Bayesian optimization.

Each iteration picks n_p property points maximizing
``S_C(existing ∪ batch) − psi · S_U(batch)``: coverage expansion traded
against generative-model uncertainty at the targets.  The batch is searched
jointly as one flattened 2·n_p vector under a Gaussian-process surrogate
with expected-improvement acquisition; the true objective is evaluated only
at initial designs, per-round acquisition winners, and closing random walks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import norm

from . import coverage, ensemble as ens_mod
from .errors import DataFormatError, DomainError, NumericError
from .problem import lhs_unit
from .serialize import fmt17


@dataclass(frozen=True)
class BoConfig:
    n_targets: int = 3
    bo_iterations: int = 50
    random_walks: int = 10
    init_batches: int = 10
    candidate_pool: int = 1000
    psi: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.psi < 0.0:
            raise DomainError(f"psi must be >= 0, got {self.psi}")
        for name in ("n_targets", "bo_iterations", "random_walks", "init_batches", "candidate_pool"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")


def search_bounds(cov_config: coverage.CoverageConfig) -> np.ndarray:
    """Scoring box shrunk by rho per side: targets carry a whole disk."""
    x0, x1, y0, y1 = cov_config.box
    r = cov_config.rho
    if x1 - x0 <= 2 * r or y1 - y0 <= 2 * r:
        raise DomainError("coverage box too small to shrink by rho")
    return np.array([[x0 + r, x1 - r], [y0 + r, y1 - r]])


def objective_terms(
    existing: np.ndarray,
    batch: np.ndarray,
    ensemble: ens_mod.Ensemble,
    corr: ens_mod.Correspondence,
    cov_config: coverage.CoverageConfig,
    psi: float,
) -> tuple[float, float, float]:
    """(S_C of the union, S_U of the batch, combined objective)."""
    batch = np.asarray(batch, dtype=float)
    combined = np.vstack((existing, batch)) if len(existing) else batch
    sc = coverage.coverage_score(combined, cov_config)
    su = ens_mod.batch_uncertainty(ensemble, corr, batch)
    return sc, su, sc - psi * su


def objective(
    existing: np.ndarray,
    batch: np.ndarray,
    ensemble: ens_mod.Ensemble,
    corr: ens_mod.Correspondence,
    cov_config: coverage.CoverageConfig,
    psi: float,
) -> float:
    return objective_terms(existing, batch, ensemble, corr, cov_config, psi)[2]


# ---------------------------------------------------------------------------
# Gaussian-process surrogate


@dataclass
class GpSurrogate:
    X: np.ndarray  # (m, q) observed flattened batches
    y: np.ndarray  # (m,)
    lengthscale: float
    signal_var: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray  # K^-1 y


def gp_fit(inputs: np.ndarray, values: np.ndarray, jitter: float = 1e-6) -> GpSurrogate:
    """Zero-mean GP with a squared-exponential kernel.

    Heuristic hyperparameters: length scale = median pairwise input distance
    (1.0 when degenerate), signal variance = sample variance of the values
    (1.0 when zero).
    """
    X = np.asarray(inputs, dtype=float)
    y = np.asarray(values, dtype=float)
    if X.ndim != 2 or len(X) < 2 or len(X) != len(y):
        raise DomainError("gp_fit needs >= 2 matching observations")
    dists = pdist(X)
    positive = dists[dists > 0.0]
    lengthscale = float(np.median(positive)) if len(positive) else 1.0
    signal_var = float(np.var(y, ddof=1))
    if not signal_var > 0.0:
        signal_var = 1.0
    K = signal_var * _se_kernel(X, X, lengthscale) + jitter * np.eye(len(X))
    try:
        chol = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise NumericError("kernel matrix not positive definite despite jitter") from None
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    return GpSurrogate(
        X=X, y=y, lengthscale=lengthscale, signal_var=signal_var, jitter=jitter,
        chol=chol, alpha=alpha,
    )


def _se_kernel(A: np.ndarray, B: np.ndarray, lengthscale: float) -> np.ndarray:
    d2 = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-0.5 * np.maximum(d2, 0.0) / (lengthscale * lengthscale))


def gp_posterior(surrogate: GpSurrogate, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (clamped >= 0) at query rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = surrogate.signal_var * _se_kernel(surrogate.X, X, surrogate.lengthscale)  # (m, q)
    mean = k.T @ surrogate.alpha
    v = np.linalg.solve(surrogate.chol, k)
    var = surrogate.signal_var - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def expected_improvement(
    surrogate: GpSurrogate, X: np.ndarray, best_value: float
) -> np.ndarray:
    """Closed-form EI for maximization; max(mu - best, 0) where sigma = 0."""
    mean, var = gp_posterior(surrogate, X)
    sigma = np.sqrt(var)
    improve = mean - best_value
    out = np.maximum(improve, 0.0)
    pos = sigma > 0.0
    if np.any(pos):
        z = improve[pos] / sigma[pos]
        out[pos] = improve[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return out


# ---------------------------------------------------------------------------
# the optimizer


@dataclass
class TraceRecord:
    index: int
    phase: str  # init | ei | random
    batch: np.ndarray  # flattened (2 * n_p,)
    sc: float
    su: float
    f: float


@dataclass
class OptimizeResult:
    batch: np.ndarray  # (n_p, 2)
    value: float
    sc: float
    su: float
    trace: list[TraceRecord] = field(default_factory=list)


def _refine_by_coordinates(
    x: np.ndarray,
    surrogate: GpSurrogate,
    best: float,
    lo: np.ndarray,
    hi: np.ndarray,
    passes: int = 2,
) -> np.ndarray:
    """Greedy per-coordinate EI ascent with a halving step."""
    x = x.copy()
    step = 0.05 * (hi - lo)
    ei_x = float(expected_improvement(surrogate, x[None, :], best)[0])
    for _ in range(passes):
        for j in range(len(x)):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[j] = min(max(cand[j] + sign * step[j], lo[j]), hi[j])
                ei_c = float(expected_improvement(surrogate, cand[None, :], best)[0])
                if ei_c > ei_x:
                    x, ei_x = cand, ei_c
        step *= 0.5
    return x


def optimize_targets(
    existing: np.ndarray,
    ensemble: ens_mod.Ensemble,
    corr: ens_mod.Correspondence,
    bo_config: BoConfig,
    cov_config: coverage.CoverageConfig,
) -> OptimizeResult:
    """Pick the target batch maximizing the coverage/uncertainty objective.

    Three phases share one audit trail: LHS initial designs, 50 rounds of
    GP + EI (1000 random candidates, then coordinate refinement, then one
    true evaluation), and closing uniform random walks.  The best evaluated
    batch wins; deterministic for a fixed seed.
    """
    existing = np.asarray(existing, dtype=float)
    rng = np.random.default_rng(bo_config.seed)
    per_point = search_bounds(cov_config)
    lo = np.tile(per_point[:, 0], bo_config.n_targets)
    hi = np.tile(per_point[:, 1], bo_config.n_targets)
    dims = 2 * bo_config.n_targets

    trace: list[TraceRecord] = []
    X_obs: list[np.ndarray] = []
    f_obs: list[float] = []

    def evaluate(flat: np.ndarray, phase: str) -> float:
        batch = flat.reshape(bo_config.n_targets, 2)
        sc, su, f = objective_terms(
            existing, batch, ensemble, corr, cov_config, bo_config.psi
        )
        trace.append(
            TraceRecord(index=len(trace), phase=phase, batch=flat.copy(), sc=sc, su=su, f=f)
        )
        X_obs.append(flat.copy())
        f_obs.append(f)
        return f

    for flat in lo + lhs_unit(bo_config.init_batches, dims, rng) * (hi - lo):
        evaluate(flat, "init")

    for _ in range(bo_config.bo_iterations):
        # fit on centered values: the zero-mean prior then reverts to the
        # average objective instead of 0 far from observed batches, so
        # unexplored regions keep a live improvement chance under EI
        center = float(np.mean(f_obs))
        surrogate = gp_fit(np.array(X_obs), np.array(f_obs) - center)
        best = max(f_obs) - center
        pool = rng.uniform(lo, hi, size=(bo_config.candidate_pool, dims))
        ei = expected_improvement(surrogate, pool, best)
        winner = _refine_by_coordinates(pool[int(np.argmax(ei))], surrogate, best, lo, hi)
        evaluate(winner, "ei")

    for _ in range(bo_config.random_walks):
        evaluate(rng.uniform(lo, hi, size=dims), "random")

    i_best = int(np.argmax(f_obs))
    rec = trace[i_best]
    return OptimizeResult(
        batch=rec.batch.reshape(bo_config.n_targets, 2).copy(),
        value=rec.f,
        sc=rec.sc,
        su=rec.su,
        trace=trace,
    )


def save_trace_csv(trace: list[TraceRecord], path: str | Path) -> None:
    """One row per objective evaluation: index, phase, batch coords, terms."""
    if not trace:
        raise DomainError("empty trace")
    dims = len(trace[0].batch)
    header = ["index", "phase"] + [f"b{j}" for j in range(dims)] + ["sc", "su", "f"]
    lines = [",".join(header)]
    for rec in trace:
        cells = [str(rec.index), rec.phase]
        cells += [fmt17(v) for v in rec.batch]
        cells += [fmt17(rec.sc), fmt17(rec.su), fmt17(rec.f)]
        lines.append(",".join(cells))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_trace_csv(path: str | Path) -> list[TraceRecord]:
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise DataFormatError(f"missing trace file {path}") from None
    if not lines or not lines[0].startswith("index,phase,"):
        raise DataFormatError(f"{path}: not a BO trace CSV")
    dims = len(lines[0].split(",")) - 5
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != dims + 5:
            raise DataFormatError(f"{path}: line {lineno}: wrong column count")
        try:
            out.append(
                TraceRecord(
                    index=int(cells[0]),
                    phase=cells[1],
                    batch=np.array([float(v) for v in cells[2 : 2 + dims]]),
                    sc=float(cells[2 + dims]),
                    su=float(cells[3 + dims]),
                    f=float(cells[4 + dims]),
                )
            )
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return out
