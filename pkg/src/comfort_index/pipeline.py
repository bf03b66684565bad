"""End-to-end CI/unCI estimation: normalizer, emotion regressors, AV mapping, scoring."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .circumplex import (
    COMFORT_SUBSET,
    UNCOMFORT_SUBSET,
    AVPoint,
    AxisModel,
    EmotionAngles,
    av_transform_batch,
    fit_axis,
    g_axis,
    jitter_angles,
    subset_intensities,
)
from .errors import InsufficientDataError, ParameterError
from .features import (
    EMOTIONS,
    Normalizer,
    WindowedSample,
    comfort_labels,
    emotion_matrix,
    feature_matrix,
    fit_normalizer,
    split_dataset,
    uncomfort_labels,
)
from .kde import KdeModel, fit_weighted_kde
from .regressors import EvalMetrics, ForestParams, MlpConfig, compute_metrics, model_from_dict, mlp_train, rf_train

log = logging.getLogger(__name__)

METHODS = ("direct", "circumplex", "kde")
REGRESSORS = ("rf", "nn")
TARGETS = EMOTIONS + ("ci", "unci")


@dataclass(frozen=True)
class PipelineConfig:
    models: tuple = ("rf",)
    seed: int = 0
    n_estimators: int = 100
    max_depth: int = 6
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    dropout: float = 0.3
    huber_delta: float = 1.0
    jitter_deg: float = 0.0
    uncomfort_source: str = "complement"
    degenerate: str = "drop"  # or "origin"
    kde_grid: int = 201
    n_jobs: int = 1

    def __post_init__(self):
        bad = [m for m in self.models if m not in REGRESSORS]
        if bad or not self.models:
            raise ParameterError(f"models must be a non-empty subset of {REGRESSORS}, got {self.models}")
        if self.degenerate not in ("drop", "origin"):
            raise ParameterError(f"degenerate must be 'drop' or 'origin', got {self.degenerate!r}")
        if self.jitter_deg < 0:
            raise ParameterError("jitter_deg must be non-negative")

    def forest_params(self, offset=0) -> ForestParams:
        return ForestParams(n_estimators=self.n_estimators, max_depth=self.max_depth, seed=self.seed + offset)

    def mlp_config(self, offset=0) -> MlpConfig:
        return MlpConfig(dropout=self.dropout, lr=self.learning_rate, huber_delta=self.huber_delta,
                         epochs=self.epochs, batch_size=self.batch_size, seed=self.seed + offset)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in known}
        if "models" in d:
            m = d["models"]
            d["models"] = tuple(m.split(",")) if isinstance(m, str) else tuple(m)
        return cls(**d)


@dataclass
class PipelineModel:
    config: PipelineConfig
    normalizer: Normalizer
    angles: EmotionAngles
    emotion_models: dict
    direct_models: dict
    axis_ci: AxisModel
    axis_unci: AxisModel
    kde_ci: KdeModel
    kde_unci: KdeModel
    train_info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "normalizer": self.normalizer.to_dict(),
            "angles": self.angles.to_dict(),
            "emotion_models": {k: m.to_dict() for k, m in sorted(self.emotion_models.items())},
            "direct_models": {k: m.to_dict() for k, m in sorted(self.direct_models.items())},
            "axis_ci": self.axis_ci.to_dict(),
            "axis_unci": self.axis_unci.to_dict(),
            "kde_ci": self.kde_ci.to_dict(),
            "kde_unci": self.kde_unci.to_dict(),
            "train_info": self.train_info,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            config=PipelineConfig.from_dict(d["config"]),
            normalizer=Normalizer.from_dict(d["normalizer"]),
            angles=EmotionAngles(**d["angles"]),
            emotion_models={k: model_from_dict(m) for k, m in d["emotion_models"].items()},
            direct_models={k: model_from_dict(m) for k, m in d["direct_models"].items()},
            axis_ci=AxisModel.from_dict(d["axis_ci"]),
            axis_unci=AxisModel.from_dict(d["axis_unci"]),
            kde_ci=KdeModel.from_dict(d["kde_ci"]),
            kde_unci=KdeModel.from_dict(d["kde_unci"]),
            train_info=dict(d.get("train_info", {})),
        )


def reported_av(emotions: np.ndarray, angles: EmotionAngles):
    """Comfort-subset and uncomfort-subset AV locations with their validity masks."""
    av_ci, ok_ci = av_transform_batch(subset_intensities(emotions, COMFORT_SUBSET), angles.of(COMFORT_SUBSET))
    av_un, ok_un = av_transform_batch(subset_intensities(emotions, UNCOMFORT_SUBSET), angles.of(UNCOMFORT_SUBSET))
    return av_ci, ok_ci, av_un, ok_un


def train_pipeline(train_samples, config: PipelineConfig = PipelineConfig()) -> PipelineModel:
    """Fit every sub-model on one training partition.

    Axis and KDE models are fitted on AV locations of the *reported*
    emotions; the regressors learn features -> emotions and, for the direct
    method, features -> (CI, unCI).
    """
    samples = list(train_samples)
    if len(samples) < 50:
        raise InsufficientDataError(f"pipeline training needs at least 50 samples, got {len(samples)}")
    subjects = sorted({s.subject_id for s in samples})
    if len(subjects) < 2:
        raise InsufficientDataError("pipeline training needs samples from at least 2 subjects")

    X_raw = feature_matrix(samples)
    normalizer = fit_normalizer(X_raw)
    X = normalizer.transform(X_raw)
    E = emotion_matrix(samples)
    ci = comfort_labels(samples)
    unci = uncomfort_labels(samples, config.uncomfort_source)
    log.info("unCI labels source: %s", config.uncomfort_source)

    angles = jitter_angles(EmotionAngles(), config.jitter_deg, rng_seed=[config.seed, 7])
    av_ci, ok_ci, av_un, ok_un = reported_av(E, angles)
    if config.degenerate == "origin":
        ok_ci = np.ones_like(ok_ci)
        ok_un = np.ones_like(ok_un)
    axis_ci = fit_axis(av_ci[ok_ci], ci[ok_ci])
    axis_unci = fit_axis(av_un[ok_un], unci[ok_un])
    kde_ci = fit_weighted_kde(av_ci[ok_ci], ci[ok_ci], config.kde_grid)
    kde_unci = fit_weighted_kde(av_un[ok_un], unci[ok_un], config.kde_grid)

    direct_Y = np.column_stack([ci, unci])
    emotion_models, direct_models = {}, {}
    for kind in config.models:
        if kind == "rf":
            emotion_models[kind] = rf_train(X, E, config.forest_params(0), EMOTIONS, n_jobs=config.n_jobs)
            direct_models[kind] = rf_train(X, direct_Y, config.forest_params(1), ("ci", "unci"), n_jobs=config.n_jobs)
        else:
            emotion_models[kind] = mlp_train(X, E, config.mlp_config(0), EMOTIONS)
            direct_models[kind] = mlp_train(X, direct_Y, config.mlp_config(1), ("ci", "unci"))

    info = {"n_samples": len(samples), "subjects": subjects,
            "trials": sorted({s.trial_id for s in samples}),
            "dropped_degenerate_ci": int((~ok_ci).sum()), "dropped_degenerate_unci": int((~ok_un).sum())}
    return PipelineModel(config, normalizer, angles, emotion_models, direct_models,
                         axis_ci, axis_unci, kde_ci, kde_unci, info)


@dataclass(frozen=True)
class Estimate:
    ci: float
    unci: float
    emotions: np.ndarray
    av_ci: AVPoint
    av_unci: AVPoint
    degenerate: bool = False


def _check_method(method, model, pipeline):
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    if model not in pipeline.emotion_models:
        raise ParameterError(f"bundle has no {model!r} regressor (has {sorted(pipeline.emotion_models)})")


def score_emotions(pipeline: PipelineModel, emotions: np.ndarray, method: str):
    """CI/unCI from an ``(n, 4)`` emotion matrix via the circumplex axes or the KDEs."""
    av_ci, ok_ci, av_un, ok_un = reported_av(emotions, pipeline.angles)
    if method == "circumplex":
        ci, unci = g_axis(pipeline.axis_ci.theta_deg, av_ci), g_axis(pipeline.axis_unci.theta_deg, av_un)
    elif method == "kde":
        ci, unci = pipeline.kde_ci.score(av_ci), pipeline.kde_unci.score(av_un)
    else:
        raise ParameterError(f"method {method!r} does not score emotions")
    ci = np.where(ok_ci, ci, 0.0)
    unci = np.where(ok_un, unci, 0.0)
    return ci, unci, av_ci, av_un, ~(ok_ci & ok_un)


def estimate_batch(pipeline: PipelineModel, X_raw, method: str = "circumplex", model: str = "rf",
                   emotions: Optional[np.ndarray] = None) -> dict:
    """Vectorized :func:`estimate`.

    ``emotions`` replaces the regressor's emotion estimates (e.g. with
    reported values) for the circumplex and KDE methods.
    """
    _check_method(method, model, pipeline)
    X = pipeline.normalizer.transform(np.atleast_2d(X_raw))
    E = pipeline.emotion_models[model].predict(X) if emotions is None else np.atleast_2d(emotions)
    if method == "direct":
        d = pipeline.direct_models[model].predict(X)
        ci, unci = d[:, 0], d[:, 1]
        av_ci, ok_ci, av_un, ok_un = reported_av(E, pipeline.angles)
        degenerate = ~(ok_ci & ok_un)
    else:
        ci, unci, av_ci, av_un, degenerate = score_emotions(pipeline, E, method)
    return {"ci": ci, "unci": unci, "emotions": E, "av_ci": av_ci, "av_unci": av_un, "degenerate": degenerate}


def estimate(pipeline: PipelineModel, features, method: str = "circumplex", model: str = "rf") -> Estimate:
    """CI, unCI and the intermediate emotions/AV locations for one feature vector."""
    r = estimate_batch(pipeline, np.asarray(features, dtype=np.float64)[None, :], method, model)
    return Estimate(float(r["ci"][0]), float(r["unci"][0]), r["emotions"][0],
                    AVPoint(*map(float, r["av_ci"][0])), AVPoint(*map(float, r["av_unci"][0])),
                    bool(r["degenerate"][0]))


PREDICTION_LOG_COLUMNS = (
    "subject", "trial", "t",
    "surprise_reported", "anxiety_reported", "boredom_reported", "calmness_reported",
    "surprise_est", "anxiety_est", "boredom_est", "calmness_est",
    "av_v", "av_a", "method", "ci_pred", "unci_pred", "ci_reported", "unci_reported",
)


def prediction_rows(samples, result, method, uncomfort_source="complement"):
    ci_rep = comfort_labels(samples)
    un_rep = uncomfort_labels(samples, uncomfort_source)
    rows = []
    for i, s in enumerate(samples):
        rep = s.report.emotions
        est = result["emotions"][i]
        rows.append((s.subject_id, s.trial_id, s.report.t, *rep, *est,
                     result["av_ci"][i][0], result["av_ci"][i][1], method,
                     result["ci"][i], result["unci"][i], ci_rep[i], un_rep[i]))
    return rows


def evaluate(pipeline: PipelineModel, test_samples, method: str = "circumplex", model: str = "rf",
             emotion_source: str = "estimated", log_path=None) -> dict:
    """RMSE/MAE per target (four emotions, CI, unCI) on a held-out partition.

    ``emotion_source="reported"`` feeds the reported emotions into the
    circumplex/KDE scorers, isolating the axis/KDE fit error. If ``log_path``
    is given, one row per sample is appended to that CSV.
    """
    samples = list(test_samples)
    if not samples:
        raise InsufficientDataError("empty test set")
    E_rep = emotion_matrix(samples)
    emotions = E_rep if emotion_source == "reported" else None
    if emotion_source not in ("estimated", "reported"):
        raise ParameterError(f"unknown emotion_source {emotion_source!r}")
    r = estimate_batch(pipeline, feature_matrix(samples), method, model, emotions=emotions)
    out = {e: compute_metrics(r["emotions"][:, k], E_rep[:, k]) for k, e in enumerate(EMOTIONS)}
    out["ci"] = compute_metrics(r["ci"], comfort_labels(samples))
    out["unci"] = compute_metrics(r["unci"], uncomfort_labels(samples, pipeline.config.uncomfort_source))
    if log_path is not None:
        from .io import write_prediction_log

        label = f"{method}({model})" if emotion_source == "estimated" else f"{method}(reported)"
        write_prediction_log(log_path, prediction_rows(samples, r, label, pipeline.config.uncomfort_source))
    return out


def evaluate_all(pipeline: PipelineModel, test_samples) -> dict:
    """Every (method, regressor) combination available in the bundle."""
    return {(m, k): evaluate(pipeline, test_samples, m, k)
            for k in sorted(pipeline.emotion_models) for m in METHODS}


@dataclass
class LotoResult:
    trial_id: str
    method: str
    model: str
    trace: list  # rows (t, ci_pred, unci_pred, ci_reported, unci_reported)
    metrics: dict
    pipeline: PipelineModel


def leave_one_trial_out(samples, trial_id: str, method: str = "circumplex", model: str = "rf",
                        config: PipelineConfig = PipelineConfig()) -> LotoResult:
    """Train on every other trial and trace predictions over the held-out one."""
    train, test = split_dataset(samples, ("trial", trial_id))
    pipeline = train_pipeline(train, config)
    test = sorted(test, key=lambda s: s.report.t)
    r = estimate_batch(pipeline, feature_matrix(test), method, model)
    ci_rep = comfort_labels(test)
    un_rep = uncomfort_labels(test, config.uncomfort_source)
    trace = [(float(s.report.t), float(r["ci"][i]), float(r["unci"][i]), float(ci_rep[i]), float(un_rep[i]))
             for i, s in enumerate(test)]
    metrics = evaluate(pipeline, test, method, model)
    return LotoResult(trial_id, method, model, trace, metrics, pipeline)
