"""Multi-branch feedforward regressor trained with Adam on the Huber loss.

Each target gets an independent branch ``in -> 16 (ReLU) -> dropout -> 8
(ReLU) -> dropout -> 1``. Plain numpy; dropout is inverted so inference needs
no rescaling.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DataError, ParameterError, TrainingError
from .forest import _check_X


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (16, 8)
    dropout: float = 0.3
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    huber_delta: float = 1.0
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


PARAM_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


def init_branch(n_in: int, hidden, rng: np.random.Generator) -> dict:
    """Glorot-uniform weights, zero biases."""
    sizes = [n_in, *hidden, 1]
    p = {}
    for k, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        lim = np.sqrt(6.0 / (fi + fo))
        p[f"W{k}"] = rng.uniform(-lim, lim, size=(fi, fo))
        p[f"b{k}"] = np.zeros(fo)
    return p


def forward(p: dict, X: np.ndarray) -> np.ndarray:
    """Inference pass (no dropout); returns shape ``(n,)``."""
    h1 = np.maximum(X @ p["W1"] + p["b1"], 0.0)
    h2 = np.maximum(h1 @ p["W2"] + p["b2"], 0.0)
    return (h2 @ p["W3"] + p["b3"])[:, 0]


def huber(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def loss_and_grad(p: dict, X: np.ndarray, y: np.ndarray, delta: float = 1.0, masks=None):
    """Mean Huber loss of one branch and its gradient.

    ``masks`` is an optional pair of (already rescaled) dropout multipliers
    for the two hidden layers.
    """
    z1 = X @ p["W1"] + p["b1"]
    h1 = np.maximum(z1, 0.0)
    if masks is not None:
        h1 = h1 * masks[0]
    z2 = h1 @ p["W2"] + p["b2"]
    h2 = np.maximum(z2, 0.0)
    if masks is not None:
        h2 = h2 * masks[1]
    out = (h2 @ p["W3"] + p["b3"])[:, 0]
    r = out - y
    n = y.size
    loss = float(np.mean(huber(r, delta)))

    g_out = (np.clip(r, -delta, delta) / n)[:, None]
    g = {"W3": h2.T @ g_out, "b3": g_out.sum(axis=0)}
    g_h2 = g_out @ p["W3"].T
    if masks is not None:
        g_h2 = g_h2 * masks[1]
    g_z2 = g_h2 * (z2 > 0)
    g["W2"] = h1.T @ g_z2
    g["b2"] = g_z2.sum(axis=0)
    g_h1 = g_z2 @ p["W2"].T
    if masks is not None:
        g_h1 = g_h1 * masks[0]
    g_z1 = g_h1 * (z1 > 0)
    g["W1"] = X.T @ g_z1
    g["b1"] = g_z1.sum(axis=0)
    return loss, g


def train_branch(X: np.ndarray, y: np.ndarray, cfg: MlpConfig, rng: np.random.Generator):
    p = init_branch(X.shape[1], cfg.hidden, rng)
    m = {k: np.zeros_like(v) for k, v in p.items()}
    v = {k: np.zeros_like(val) for k, val in p.items()}
    keep = 1.0 - cfg.dropout
    n = X.shape[0]
    step = 0
    last = float("nan")
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            b = perm[s:s + cfg.batch_size]
            masks = None
            if cfg.dropout > 0:
                masks = tuple((rng.random((b.size, h)) < keep) / keep for h in cfg.hidden)
            # divergence is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, g = loss_and_grad(p, X[b], y[b], cfg.huber_delta, masks)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch}", epoch=epoch)
            total += loss * b.size
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            for k in PARAM_ORDER:
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k]
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k]
                p[k] = p[k] - cfg.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + cfg.eps)
        last = total / n
    return p, last


@dataclass(frozen=True)
class MlpModel:
    branches: list  # list of parameter dicts, one per target
    config: MlpConfig
    targets: tuple = ()
    final_loss: tuple = ()
    n_features: int = 15

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.clip(np.column_stack([forward(p, X) for p in self.branches]), 0.0, 1.0)

    def to_dict(self):
        return {"kind": "nn", "config": self.config.to_dict(), "targets": list(self.targets),
                "n_features": self.n_features,
                "final_loss": [None if not np.isfinite(x) else x for x in self.final_loss],
                "branches": [{k: p[k].tolist() for k in PARAM_ORDER} for p in self.branches]}

    @classmethod
    def from_dict(cls, d):
        branches = [{k: np.asarray(b[k], dtype=np.float64) for k in PARAM_ORDER} for b in d["branches"]]
        fl = tuple(float("nan") if x is None else x for x in d["final_loss"])
        return cls(branches, MlpConfig.from_dict(d["config"]), tuple(d["targets"]), fl, int(d["n_features"]))


def branch_rng(seed: int, branch: int) -> np.random.Generator:
    return np.random.default_rng([seed, branch])


def mlp_train(X, Y, config: MlpConfig = MlpConfig(), targets=()) -> MlpModel:
    """Train one branch per column of ``Y``; each branch owns its generator."""
    X = _check_X(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise DataError("X and Y differ in length")
    if X.shape[0] < 50:
        raise ParameterError(f"network training needs at least 50 samples, got {X.shape[0]}")
    branches, losses = [], []
    for k in range(Y.shape[1]):
        p, loss = train_branch(X, Y[:, k], config, branch_rng(config.seed, k))
        branches.append(p)
        losses.append(loss)
    return MlpModel(branches, config, tuple(targets) or tuple(f"y{k}" for k in range(Y.shape[1])),
                    tuple(losses), X.shape[1])


def mlp_predict(model: MlpModel, x) -> np.ndarray:
    out = model.predict(x)
    return out[0] if np.ndim(x) == 1 else out
