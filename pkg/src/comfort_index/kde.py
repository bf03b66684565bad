"""Weighted Gaussian kernel density over AV points, normalized to a peak of 1."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ParameterError

GRID_RESOLUTION = 201
REGULARIZATION = 1e-6


def weighted_covariance(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Unbiased reliability-weighted covariance (same convention as ``np.cov(aweights=...)``)."""
    w = weights / weights.sum()
    mu = w @ points
    c = points - mu
    cov = (c * w[:, None]).T @ c
    return cov / (1.0 - np.sum(w ** 2))


def scott_factor(n_eff: float, dim: int = 2) -> float:
    return n_eff ** (-1.0 / (dim + 4))


def _chol_whitener(cov):
    L = np.linalg.cholesky(cov)
    return np.linalg.inv(L)


@dataclass(frozen=True)
class KdeModel:
    points: np.ndarray
    weights: np.ndarray  # as given, not normalized
    bandwidth_factor: float
    covariance: np.ndarray  # kernel covariance = data covariance * factor**2
    kernel_max: float
    grid_resolution: int = GRID_RESOLUTION

    def density(self, av) -> np.ndarray:
        """Unnormalized mixture density ``sum_i w_i exp(-0.5 m_i^2)`` with Mahalanobis ``m_i``."""
        q = np.atleast_2d(np.asarray(av, dtype=np.float64))
        W = _chol_whitener(self.covariance)
        pw = self.points @ W.T
        qw = q @ W.T
        w = self.weights / self.weights.sum()
        out = np.empty(q.shape[0])
        chunk = max(1, 2_000_000 // max(1, pw.shape[0]))
        for s in range(0, q.shape[0], chunk):
            d = qw[s:s + chunk, None, :] - pw[None, :, :]
            m2 = np.einsum("ijk,ijk->ij", d, d)
            out[s:s + chunk] = np.exp(-0.5 * m2) @ w
        return out

    def gradient(self, av) -> np.ndarray:
        """Analytic gradient of :meth:`density` with respect to the query point."""
        q = np.atleast_2d(np.asarray(av, dtype=np.float64))
        prec = np.linalg.inv(self.covariance)
        w = self.weights / self.weights.sum()
        out = np.empty_like(q)
        for i, x in enumerate(q):
            d = x - self.points
            e = np.exp(-0.5 * np.einsum("ij,jk,ik->i", d, prec, d)) * w
            out[i] = -(e[:, None] * (d @ prec)).sum(axis=0)
        return out

    def score(self, av):
        """Density divided by ``kernel_max``, clipped to ``[0, 1]``."""
        s = np.clip(self.density(av) / self.kernel_max, 0.0, 1.0)
        return float(s[0]) if np.ndim(av) == 1 else s

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "bandwidth_factor": self.bandwidth_factor,
            "covariance": self.covariance.tolist(),
            "kernel_max": self.kernel_max,
            "grid_resolution": self.grid_resolution,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["points"], dtype=np.float64), np.asarray(d["weights"], dtype=np.float64),
                   float(d["bandwidth_factor"]), np.asarray(d["covariance"], dtype=np.float64),
                   float(d["kernel_max"]), int(d["grid_resolution"]))


def evaluation_grid(resolution: int = GRID_RESOLUTION):
    """Square grid over ``[-1, 1]^2``; returns the axis ticks and an ``(r*r, 2)`` point array."""
    ticks = np.linspace(-1.0, 1.0, resolution)
    vv, aa = np.meshgrid(ticks, ticks, indexing="xy")
    return ticks, np.column_stack([vv.ravel(), aa.ravel()])


def fit_weighted_kde(points, weights, grid_resolution: int = GRID_RESOLUTION) -> KdeModel:
    """Gaussian KDE with observation weights and Scott's bandwidth.

    The bandwidth factor is ``n_eff ** (-1/6)`` with effective sample size
    ``n_eff = (sum w)^2 / sum w^2``. A singular data covariance (collinear
    points) is regularized by ``1e-6 * I``. ``kernel_max`` is the largest
    density on a ``grid_resolution``-square grid over ``[-1, 1]^2``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).ravel()
    if P.shape[0] != w.size or P.shape[1] != 2:
        raise ParameterError("points must be (n, 2) and match the weights")
    if P.shape[0] < 5:
        raise InsufficientDataError(f"KDE needs at least 5 points, got {P.shape[0]}")
    if np.any(w < 0) or not w.sum() > 0:
        raise ParameterError("weights must be non-negative with a positive sum")
    wn = w / w.sum()
    n_eff = 1.0 / np.sum(wn ** 2)
    factor = scott_factor(n_eff)
    data_cov = weighted_covariance(P, w)
    if not np.all(np.isfinite(data_cov)):
        data_cov = np.zeros((2, 2))
    if np.linalg.eigvalsh(data_cov).min() <= REGULARIZATION * 1e-3:
        warnings.warn("degenerate AV covariance; adding 1e-6 * I", RuntimeWarning, stacklevel=2)
        data_cov = data_cov + REGULARIZATION * np.eye(2)
    cov = data_cov * factor ** 2
    tmp = KdeModel(P, w, float(factor), cov, 1.0, int(grid_resolution))
    _, grid = evaluation_grid(grid_resolution)
    kmax = float(tmp.density(grid).max())
    if not kmax > 0:
        raise ParameterError("density vanishes on the whole evaluation grid")
    return KdeModel(P, w, float(factor), cov, kmax, int(grid_resolution))


def kde_score(model: KdeModel, av):
    return model.score(av)
