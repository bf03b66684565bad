from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class EvalMetrics:
    rmse: float
    mae: float


def compute_metrics(predictions, targets) -> EvalMetrics:
    """Root-mean-square and mean absolute error."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size != t.size:
        raise DataError(f"{p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise DataError("cannot score an empty prediction set")
    e = p - t
    return EvalMetrics(float(np.sqrt(np.mean(e * e))), float(np.mean(np.abs(e))))
