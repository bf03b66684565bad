"""Emotion to arousal-valence mapping, circumplex axis scoring and axis fitting.

Angles are in degrees everywhere in the public API. Valence is the
horizontal coordinate and arousal the vertical one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateReportError, InsufficientDataError, ParameterError

COMFORT_SUBSET = ("calmness", "surprise", "boredom")
UNCOMFORT_SUBSET = ("surprise", "anxiety", "boredom")
ON_AXIS_DEG = 5.0
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
PLATEAU_TOL = 1e-12


@dataclass(frozen=True)
class EmotionAngles:
    surprise: float = 60.0
    anxiety: float = 110.0
    boredom: float = 240.0
    calmness: float = 290.0

    def __post_init__(self):
        vals = self.as_tuple()
        if any(not 0.0 <= v < 360.0 for v in vals):
            raise ParameterError(f"emotion angles must lie in [0, 360): {vals}")
        if len(set(vals)) != len(vals):
            raise ParameterError(f"emotion angles must be distinct: {vals}")

    def as_tuple(self):
        return (self.surprise, self.anxiety, self.boredom, self.calmness)

    def of(self, names) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=np.float64)

    def to_dict(self):
        return {"surprise": self.surprise, "anxiety": self.anxiety,
                "boredom": self.boredom, "calmness": self.calmness}


class AVPoint(NamedTuple):
    valence: float
    arousal: float


def av_transform(intensities, angles_deg) -> AVPoint:
    """Intensity-weighted mean of the emotion unit vectors."""
    p = np.asarray(intensities, dtype=np.float64)
    th = np.radians(np.asarray(angles_deg, dtype=np.float64))
    if p.shape != th.shape or p.size != 3:
        raise ParameterError("expected three intensities and three angles")
    total = p.sum()
    if not total > 0:
        raise DegenerateReportError("all emotion intensities are zero")
    return AVPoint(float(p @ np.cos(th) / total), float(p @ np.sin(th) / total))


def av_transform_batch(intensities, angles_deg):
    """Row-wise :func:`av_transform`.

    Returns an ``(n, 2)`` array of (valence, arousal) and a boolean mask of
    rows with positive intensity sum; degenerate rows are set to the origin.
    """
    P = np.atleast_2d(np.asarray(intensities, dtype=np.float64))
    th = np.radians(np.asarray(angles_deg, dtype=np.float64))
    total = P.sum(axis=1)
    ok = total > 0
    safe = np.where(ok, total, 1.0)
    av = np.column_stack([P @ np.cos(th), P @ np.sin(th)]) / safe[:, None]
    av[~ok] = 0.0
    return av, ok


def subset_intensities(emotions: np.ndarray, subset, order=("surprise", "anxiety", "boredom", "calmness")):
    """Columns of an ``(n, 4)`` emotion matrix selected by emotion name."""
    cols = [order.index(n) for n in subset]
    return np.atleast_2d(emotions)[:, cols]


def jitter_angles(angles: EmotionAngles, magnitude_deg: float = 5.0, rng_seed=None) -> EmotionAngles:
    """Perturb each emotion angle by an independent uniform draw in ``[-m, m]``."""
    if magnitude_deg < 0:
        raise ParameterError("jitter magnitude must be non-negative")
    if magnitude_deg == 0:
        return angles
    rng = np.random.default_rng(rng_seed)
    d = rng.uniform(-magnitude_deg, magnitude_deg, size=4)
    vals = [(a + x) % 360.0 for a, x in zip(angles.as_tuple(), d)]
    return EmotionAngles(*vals)


def angular_difference(a_deg, b_deg):
    """Smallest absolute difference between two angles, in ``[0, 180]``."""
    d = np.mod(np.asarray(a_deg, dtype=np.float64) - b_deg + 180.0, 360.0) - 180.0
    return np.abs(d)


def g_axis(theta_deg, av) -> np.ndarray | float:
    """Strength of an AV location along the axis ray at ``theta_deg``.

    Within 5 degrees of the ray the score is the radius ``d1``. Otherwise it
    is ``d2 * (1 - d3 / 2)`` where ``d2`` is the projection length onto the
    ray (0 for points behind the origin) and ``d3`` the distance to the ray.
    Accepts one point or an ``(n, 2)`` array; the result is clipped to
    ``[0, 1]``.
    """
    arr = np.asarray(av, dtype=np.float64)
    scalar = arr.ndim == 1
    arr = np.atleast_2d(arr)
    v, a = arr[:, 0], arr[:, 1]
    d1 = np.hypot(v, a)
    alpha = np.degrees(np.arctan2(a, v))
    beta = angular_difference(theta_deg, alpha)
    br = np.radians(beta)
    d2 = np.maximum(0.0, d1 * np.cos(br))
    d3 = np.where(beta <= 90.0, d1 * np.abs(np.sin(br)), d1)
    out = np.where(beta <= ON_AXIS_DEG, d1, d2 * (1.0 - d3 / 2.0))
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def axis_objective(theta_deg, points, targets) -> float:
    """Mean squared error of :func:`g_axis` at one angle."""
    r = np.asarray(targets) - g_axis(theta_deg, points)
    return float(np.mean(r * r))


def _objective_grid(thetas, points, targets, chunk=256):
    out = np.empty(thetas.size)
    v, a = points[:, 0], points[:, 1]
    d1 = np.hypot(v, a)
    alpha = np.degrees(np.arctan2(a, v))
    for s in range(0, thetas.size, chunk):
        th = thetas[s:s + chunk, None]
        beta = np.abs(np.mod(th - alpha[None, :] + 180.0, 360.0) - 180.0)
        br = np.radians(beta)
        d2 = np.maximum(0.0, d1 * np.cos(br))
        d3 = np.where(beta <= 90.0, d1 * np.abs(np.sin(br)), d1)
        g = np.clip(np.where(beta <= ON_AXIS_DEG, d1, d2 * (1.0 - d3 / 2.0)), 0.0, 1.0)
        r = targets[None, :] - g
        out[s:s + chunk] = np.mean(r * r, axis=1)
    return out


@dataclass(frozen=True)
class AxisModel:
    theta_deg: float
    fit_mse: float

    def score(self, av):
        return g_axis(self.theta_deg, av)

    def to_dict(self):
        return {"theta_deg": self.theta_deg, "fit_mse": self.fit_mse}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["theta_deg"]), float(d["fit_mse"]))


def _golden_section(f, lo, hi, tol=1e-7, max_iter=200):
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def fit_axis(points, targets, resolution_deg: float = 0.1, n_refine: int = 8) -> AxisModel:
    """Axis angle minimizing the mean squared error between ``g_axis`` and targets.

    The objective is searched exhaustively on a ``resolution_deg`` grid,
    plus the angles where some point crosses the 5 degree on-axis band (the
    objective jumps there). The ``n_refine`` best grid angles are refined by
    golden-section search within one grid step on either side. If the
    minimum is a flat run of grid angles, its centre is returned; remaining
    ties go to the smaller angle.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64).ravel()
    if P.shape[0] != y.size:
        raise ParameterError("points and targets differ in length")
    if y.size < 10:
        raise InsufficientDataError(f"axis fit needs at least 10 pairs, got {y.size}")
    grid = np.arange(0.0, 360.0, resolution_deg)
    alpha = np.degrees(np.arctan2(P[:, 1], P[:, 0]))
    eps = 1e-7
    edges = np.concatenate([alpha + ON_AXIS_DEG - eps, alpha - ON_AXIS_DEG + eps])
    cand = np.concatenate([grid, np.mod(edges, 360.0)])
    vals = _objective_grid(cand, P, y)

    best = np.lexsort((cand, vals))
    best_theta, best_val = float(cand[best[0]]), float(vals[best[0]])

    f = lambda th: float(_objective_grid(np.array([th % 360.0]), P, y)[0])
    for i in best[:n_refine]:
        th0 = float(cand[i])
        th, val = _golden_section(f, th0 - resolution_deg, th0 + resolution_deg)
        th = th % 360.0
        if val < best_val or (val == best_val and th < best_theta):
            best_theta, best_val = th, val
    if best_theta >= 360.0:
        best_theta -= 360.0
    mid = _plateau_center(grid, vals[:grid.size] <= best_val + PLATEAU_TOL, best_theta, resolution_deg)
    if mid is not None:
        mid_val = f(mid)
        if mid_val <= best_val + PLATEAU_TOL:
            best_theta, best_val = mid, min(mid_val, best_val)
    return AxisModel(best_theta, best_val)


def _plateau_center(grid, near, theta, step):
    """Centre of the run of minimizing grid angles around ``theta``, if any.

    A flat minimum (e.g. every angle within the on-axis band fits equally
    well) has no unique argmin; its midpoint is the symmetric choice.
    """
    if not near.any() or near.all():
        return None
    k = int(np.argmin(angular_difference(grid, theta)))
    if not near[k] or float(angular_difference(grid[k], theta)) > step:
        return None
    n = grid.size
    lo = k
    while near[(lo - 1) % n]:
        lo -= 1
    hi = k
    while near[(hi + 1) % n]:
        hi += 1
    if hi == lo:
        return None
    return float(((grid[lo % n] + (hi - lo) * step / 2.0)) % 360.0)


def rotate(av, delta_deg):
    """Rotate AV points counter-clockwise by ``delta_deg``."""
    arr = np.atleast_2d(np.asarray(av, dtype=np.float64))
    c, s = math.cos(math.radians(delta_deg)), math.sin(math.radians(delta_deg))
    out = arr @ np.array([[c, s], [-s, c]])
    return out[0] if np.ndim(av) == 1 else out
