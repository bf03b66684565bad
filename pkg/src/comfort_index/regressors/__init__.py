"""Emotion regressors: random forest and branch network, plus error metrics."""
from .forest import ForestModel, ForestParams, rf_predict, rf_train
from .metrics import EvalMetrics, compute_metrics
from .mlp import MlpConfig, MlpModel, mlp_predict, mlp_train


def model_from_dict(d):
    if d["kind"] == "rf":
        return ForestModel.from_dict(d)
    if d["kind"] == "nn":
        return MlpModel.from_dict(d)
    raise ValueError(f"unknown model kind {d['kind']!r}")


__all__ = ["ForestModel", "ForestParams", "rf_train", "rf_predict", "MlpConfig", "MlpModel",
           "mlp_train", "mlp_predict", "EvalMetrics", "compute_metrics", "model_from_dict"]
