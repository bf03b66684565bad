"""Random-forest regression built on greedy variance-reducing CART trees.

Trees are stored as flat node arrays (feature, threshold, left, right,
value); a leaf has ``feature == -1``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, ParameterError


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 6
    criterion: str = "squared_error"
    bootstrap: bool = True
    min_samples_split: int = 2
    seed: int = 0

    def to_dict(self):
        return {"n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "criterion": self.criterion, "bootstrap": self.bootstrap,
                "min_samples_split": self.min_samples_split, "seed": self.seed}


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            n_in = node[inner]
            go_left = X[rows[inner], f[inner]] <= self.threshold[n_in]
            node[inner] = np.where(go_left, self.left[n_in], self.right[n_in])
        return self.value[node]

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "depth": self.depth.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["value"], dtype=np.float64), np.asarray(d["depth"], dtype=np.int64))


def best_split(X: np.ndarray, y: np.ndarray):
    """Split minimizing the summed squared error of the two children.

    Candidates are midpoints between consecutive distinct sorted values of
    every feature. Returns ``(feature, threshold, sse)`` or ``None`` if no
    feature has two distinct values. Ties resolve to the lowest feature
    index, then the lowest threshold.
    """
    n, F = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    cs = np.cumsum(ys, axis=0)[:-1]
    cs2 = np.cumsum(ys * ys, axis=0)[:-1]
    tot, tot2 = y.sum(), (y * y).sum()
    nl = np.arange(1, n)[:, None].astype(np.float64)
    nr = n - nl
    sse = (cs2 - cs * cs / nl) + ((tot2 - cs2) - (tot - cs) ** 2 / nr)
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    # column-major flattening gives the feature-then-position tie order
    flat = np.argmin(sse.T)
    f, i = divmod(int(flat), n - 1)
    lo, hi = xs[i, f], xs[i + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return f, float(thr), float(sse[i, f])


def exact_mean(values, axis=None):
    """Mean computed as an offset from the first element; identical inputs give that value exactly."""
    v = np.asarray(values, dtype=np.float64)
    first = v[0] if axis in (None, 0) else np.take(v, 0, axis=axis)
    ref = first if axis in (None, 0) else np.expand_dims(first, axis)
    return first + np.mean(v - ref, axis=axis)


def build_tree(X: np.ndarray, y: np.ndarray, max_depth: int = 6, min_samples_split: int = 2) -> Tree:
    feature, threshold, left, right, value, depth = [], [], [], [], [], []

    def new_node(d, v):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(v)
        depth.append(d)
        return len(feature) - 1

    stack = [(new_node(0, float(exact_mean(y))), np.arange(y.size), 0)]
    while stack:
        node, idx, d = stack.pop()
        yi = y[idx]
        if d >= max_depth or idx.size < min_samples_split or np.ptp(yi) == 0:
            continue
        split = best_split(X[idx], yi)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(d + 1, float(exact_mean(y[li])))
        right[node] = new_node(d + 1, float(exact_mean(y[ri])))
        stack.append((right[node], ri, d + 1))
        stack.append((left[node], li, d + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value), np.array(depth, dtype=np.int64))


@dataclass(frozen=True)
class ForestModel:
    """One forest per target column; predictions are clipped to ``[0, 1]``."""

    forests: list  # list[list[Tree]], outer index = target
    params: ForestParams
    targets: tuple = ()
    n_features: int = 15

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.column_stack([
            exact_mean([t.predict(X) for t in trees], axis=0) for trees in self.forests
        ])
        return np.clip(out, 0.0, 1.0)

    def to_dict(self):
        return {"kind": "rf", "params": self.params.to_dict(), "targets": list(self.targets),
                "n_features": self.n_features,
                "forests": [[t.to_dict() for t in trees] for trees in self.forests]}

    @classmethod
    def from_dict(cls, d):
        return cls([[Tree.from_dict(t) for t in trees] for trees in d["forests"]],
                   ForestParams(**d["params"]), tuple(d["targets"]), int(d["n_features"]))


def _check_X(X, n_features=None):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if n_features is not None and X.shape[1] != n_features:
        raise DataError(f"expected {n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")
    return X


def tree_seed(seed: int, target: int, tree: int) -> np.random.Generator:
    return np.random.default_rng([seed, target, tree])


def rf_train(X, Y, params: ForestParams = ForestParams(), targets=(), n_jobs: int = 1) -> ForestModel:
    """Train one bootstrap forest per column of ``Y``.

    Each tree draws its bootstrap sample from its own generator seeded by
    ``(seed, target index, tree index)``, so the result does not depend on
    ``n_jobs``.
    """
    X = _check_X(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != X.shape[0]:
        raise DataError("X and Y differ in length")
    if not np.all(np.isfinite(Y)):
        raise DataError("non-finite target values")
    if X.shape[0] < 20:
        raise ParameterError(f"random forest needs at least 20 samples, got {X.shape[0]}")
    n = X.shape[0]

    def fit_one(job):
        k, t = job
        if params.bootstrap:
            idx = tree_seed(params.seed, k, t).integers(0, n, size=n)
        else:
            idx = np.arange(n)
        return build_tree(X[idx], Y[idx, k], params.max_depth, params.min_samples_split)

    jobs = [(k, t) for k in range(Y.shape[1]) for t in range(params.n_estimators)]
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(fit_one, jobs))
    else:
        trees = [fit_one(j) for j in jobs]
    m = params.n_estimators
    forests = [trees[k * m:(k + 1) * m] for k in range(Y.shape[1])]
    return ForestModel(forests, params, tuple(targets) or tuple(f"y{k}" for k in range(Y.shape[1])), X.shape[1])


def rf_predict(model: ForestModel, x) -> np.ndarray:
    """Per-target forest means for one feature vector or a matrix of them."""
    out = model.predict(x)
    return out[0] if np.ndim(x) == 1 else out
