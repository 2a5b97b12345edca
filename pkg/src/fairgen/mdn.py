"""Mixture density network: properties in, Gaussian mixture over shapes out.

A feed-forward tanh network maps a p-vector to the parameters of a
G-component diagonal-Gaussian mixture over d-dimensional shapes: G logits
(softmaxed to weights), G·d means, and G·d log-variances.  Implemented
directly in numpy with hand-derived gradients and full-batch Adam, so
training is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import DataFormatError, DomainError, TrainingError
from .serialize import dumps_17g

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MdnConfig:
    hidden_layers: int = 6
    hidden_width: int = 64
    components: int = 10
    epochs: int = 3000
    learning_rate: float = 1e-3
    variance_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.components < 1:
            raise DomainError(f"components must be >= 1, got {self.components}")
        if not self.variance_floor > 0.0:
            raise DomainError(f"variance_floor must be > 0, got {self.variance_floor}")
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise DomainError("need at least one hidden layer of width >= 1")
        if not self.learning_rate > 0.0:
            raise DomainError("learning_rate must be > 0")


@dataclass
class MixtureParams:
    """Per-row mixture parameters: weights (n,G), means and variances (n,G,d)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray


@dataclass
class MdnModel:
    """Trained network; immutable after training by convention."""

    config: MdnConfig
    p: int
    d: int
    hidden: list[tuple[np.ndarray, np.ndarray]]  # (W, b) per layer
    out_w: np.ndarray
    out_b: np.ndarray
    initial_nll: float = math.nan
    final_nll: float = math.nan

    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for w, b in self.hidden:
            params.extend((w, b))
        params.extend((self.out_w, self.out_b))
        return params


def _init_model(config: MdnConfig, p: int, d: int, Y: np.ndarray | None) -> MdnModel:
    """Deterministic initialization; mean heads spread over the target range."""
    rng = np.random.default_rng(config.seed)
    G = config.components
    hidden: list[tuple[np.ndarray, np.ndarray]] = []
    fan_in = p
    for _ in range(config.hidden_layers):
        scale = math.sqrt(2.0 / (fan_in + config.hidden_width))
        w = rng.normal(0.0, scale, size=(fan_in, config.hidden_width))
        hidden.append((w, np.zeros(config.hidden_width)))
        fan_in = config.hidden_width
    out_dim = G + 2 * G * d
    out_w = rng.normal(0.0, 0.01, size=(fan_in, out_dim))
    out_b = np.zeros(out_dim)
    if Y is not None and len(Y):
        lo = Y.min(axis=0)
        hi = Y.max(axis=0)
        mean_bias = lo + rng.random((G, d)) * (hi - lo)
        var0 = np.maximum(Y.var(axis=0), 1e-6)
        out_b[G : G + G * d] = mean_bias.ravel()
        out_b[G + G * d :] = np.tile(np.log(var0), G)
    return MdnModel(config=config, p=p, d=d, hidden=hidden, out_w=out_w, out_b=out_b)


def _forward_raw(model: MdnModel, X: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Activations per layer plus the raw head output (n, G + 2Gd)."""
    hs = [X]
    h = X
    for w, b in model.hidden:
        h = np.tanh(h @ w + b)
        hs.append(h)
    return hs, h @ model.out_w + model.out_b


def _split_head(
    out: np.ndarray, G: int, d: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = out.shape[0]
    logits = out[:, :G]
    means = out[:, G : G + G * d].reshape(n, G, d)
    logvars = out[:, G + G * d :].reshape(n, G, d)
    return logits, means, logvars


def forward(model: MdnModel, X: np.ndarray) -> MixtureParams:
    """Mixture parameters at each input row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.p:
        raise DomainError(f"expected (n, {model.p}) inputs, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("non-finite inputs")
    _, out = _forward_raw(model, X)
    logits, means, logvars = _split_head(out, model.config.components, model.d)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    weights = e / e.sum(axis=1, keepdims=True)
    variances = model.config.variance_floor + np.exp(logvars)
    return MixtureParams(weights=weights, means=means, variances=variances)


def _log_components(
    means: np.ndarray, variances: np.ndarray, Y: np.ndarray
) -> np.ndarray:
    """log N(y; mu_g, sigma^2_g) summed over dimensions: (n, G)."""
    diff = Y[:, None, :] - means
    return -0.5 * np.sum(LOG_2PI + np.log(variances) + diff * diff / variances, axis=2)


def nll(params: MixtureParams, Y: np.ndarray) -> float:
    """Mean negative log-likelihood of the shapes under the mixtures."""
    Y = np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise DomainError("non-finite targets")
    log_comp = _log_components(params.means, params.variances, Y)
    with np.errstate(divide="ignore"):  # zero weights are legal inputs here
        a = np.log(params.weights) + log_comp
    return float(-np.mean(logsumexp(a, axis=1)))


def _loss_and_head_grads(
    model: MdnModel, out: np.ndarray, Y: np.ndarray
) -> tuple[float, np.ndarray]:
    """NLL plus its gradient w.r.t. the raw head output."""
    G, d = model.config.components, model.d
    n = out.shape[0]
    logits, means, logvars = _split_head(out, G, d)
    ev = np.exp(logvars)
    variances = model.config.variance_floor + ev
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    pi = e / e.sum(axis=1, keepdims=True)
    log_pi = z - np.log(e.sum(axis=1, keepdims=True))
    log_comp = _log_components(means, variances, Y)
    a = log_pi + log_comp
    lse = logsumexp(a, axis=1)
    loss = float(-np.mean(lse))
    resp = np.exp(a - lse[:, None])  # responsibilities, rows sum to 1
    d_logits = (pi - resp) / n
    inv = 1.0 / variances
    diff = means - Y[:, None, :]
    d_means = resp[:, :, None] * diff * inv / n
    d_var = resp[:, :, None] * 0.5 * (inv - diff * diff * inv * inv) / n
    d_logvars = d_var * ev  # chain rule through variance = floor + exp(logvar)
    d_out = np.concatenate(
        (d_logits, d_means.reshape(n, G * d), d_logvars.reshape(n, G * d)), axis=1
    )
    return loss, d_out


def _backprop(
    model: MdnModel, hs: list[np.ndarray], d_out: np.ndarray
) -> list[np.ndarray]:
    """Gradients in model.parameters() order given head-output gradients."""
    grads_rev: list[np.ndarray] = []
    h_last = hs[-1]
    grads_rev.append(d_out.sum(axis=0))  # out_b
    grads_rev.append(h_last.T @ d_out)  # out_w
    dh = d_out @ model.out_w.T
    for layer in range(len(model.hidden) - 1, -1, -1):
        w, _ = model.hidden[layer]
        dpre = dh * (1.0 - hs[layer + 1] ** 2)  # tanh'
        grads_rev.append(dpre.sum(axis=0))  # b
        grads_rev.append(hs[layer].T @ dpre)  # w
        dh = dpre @ w.T
    return grads_rev[::-1]


def gradients(model: MdnModel, X: np.ndarray, Y: np.ndarray) -> list[np.ndarray]:
    """Analytic NLL gradient for every parameter, in parameters() order."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    hs, out = _forward_raw(model, X)
    _, d_out = _loss_and_head_grads(model, out, Y)
    return _backprop(model, hs, d_out)


def train(X: np.ndarray, Y: np.ndarray, config: MdnConfig) -> MdnModel:
    """Full-batch Adam on the mixture NLL; deterministic per config.seed."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise TrainingError(f"incompatible training shapes {X.shape} vs {Y.shape}")
    n = len(X)
    if n < 2 * config.components:
        raise TrainingError(
            f"need at least {2 * config.components} records to fit "
            f"{config.components} components, got {n}"
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise TrainingError("non-finite training data")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)  # per-seed data shuffle (full batch: order-free loss)
    X = X[order]
    Y = Y[order]
    model = _init_model(config, X.shape[1], Y.shape[1], Y)
    params = model.parameters()
    m = [np.zeros_like(w) for w in params]
    v = [np.zeros_like(w) for w in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    initial = math.nan
    for step in range(1, config.epochs + 1):
        hs, out = _forward_raw(model, X)
        loss, d_out = _loss_and_head_grads(model, out, Y)
        if step == 1:
            initial = loss
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {step}")
        grads = _backprop(model, hs, d_out)
        for i, g in enumerate(grads):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            mhat = m[i] / (1.0 - beta1**step)
            vhat = v[i] / (1.0 - beta2**step)
            params[i] -= lr * mhat / (np.sqrt(vhat) + eps)
    _, out = _forward_raw(model, X)
    final, _ = _loss_and_head_grads(model, out, Y)
    model.initial_nll = initial
    model.final_nll = final
    return model


def sample_shapes(
    model: MdnModel,
    x: np.ndarray,
    count: int,
    seed: int,
    bounds: np.ndarray,
) -> np.ndarray:
    """Ancestral samples from the mixture at property x, kept within bounds.

    Out-of-bounds draws are rejected and redrawn up to 20 times, then
    coordinate-clamped.  Deterministic for a fixed seed.
    """
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    bounds = np.asarray(bounds, dtype=float)
    params = forward(model, x)
    pi = params.weights[0]
    means = params.means[0]
    sigma = np.sqrt(params.variances[0])
    rng = np.random.default_rng(seed)
    out = np.empty((count, model.d))
    lo, hi = bounds[:, 0], bounds[:, 1]
    for i in range(count):
        draw = None
        for _ in range(20):
            g = int(rng.choice(len(pi), p=pi))
            cand = rng.normal(means[g], sigma[g])
            if np.all(cand >= lo) and np.all(cand <= hi):
                draw = cand
                break
        if draw is None:
            draw = np.clip(cand, lo, hi)
        out[i] = draw
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: MdnModel, path: str | Path) -> None:
    """JSON checkpoint, 17-significant-digit floats; round-trips bitwise."""
    cfg = model.config
    doc = {
        "config": {
            "hidden_layers": cfg.hidden_layers,
            "hidden_width": cfg.hidden_width,
            "components": cfg.components,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "variance_floor": cfg.variance_floor,
            "seed": cfg.seed,
        },
        "p": model.p,
        "d": model.d,
        "initial_nll": model.initial_nll,
        "final_nll": model.final_nll,
        "hidden": [[w.tolist(), b.tolist()] for w, b in model.hidden],
        "out_w": model.out_w.tolist(),
        "out_b": model.out_b.tolist(),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_17g(doc, indent=1) + "\n")
    tmp.replace(path)


def load_model(path: str | Path) -> MdnModel:
    try:
        doc = json.loads(Path(path).read_text())
        config = MdnConfig(**doc["config"])
        hidden = [
            (np.array(w, dtype=float), np.array(b, dtype=float)) for w, b in doc["hidden"]
        ]
        model = MdnModel(
            config=config,
            p=int(doc["p"]),
            d=int(doc["d"]),
            hidden=hidden,
            out_w=np.array(doc["out_w"], dtype=float),
            out_b=np.array(doc["out_b"], dtype=float),
            initial_nll=float(doc["initial_nll"]),
            final_nll=float(doc["final_nll"]),
        )
    except FileNotFoundError:
        raise DataFormatError(f"missing checkpoint {path}") from None
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"malformed checkpoint {path}: {exc}") from None
    return model
