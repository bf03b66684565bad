import dataclasses

import numpy as np
import pytest

from comfort_index.circumplex import AxisModel, angular_difference
from comfort_index.errors import InsufficientDataError, ParameterError
from comfort_index.features import label_windows, split_dataset
from comfort_index.io import dumps_json, read_csv
from comfort_index.pipeline import (
    METHODS, PipelineConfig, PipelineModel, estimate, estimate_batch, evaluate, evaluate_all,
    leave_one_trial_out, score_emotions, train_pipeline,
)
from comfort_index.synth import SynthConfig, synth_generate

FAST = PipelineConfig(n_estimators=30, epochs=20)


def windows(cfg):
    records, _ = synth_generate(cfg)
    return [s for r in records for s in label_windows(r)]


@pytest.fixture(scope="module")
def circ_split():
    samples = windows(SynthConfig(seed=5, n_subjects=3, trials_per_subject=2, comfort_mode="circumplex"))
    return split_dataset(samples, ("fraction", 0.7), seed=0)


@pytest.fixture(scope="module")
def circ_pipeline(circ_split):
    return train_pipeline(circ_split[0], FAST)


@pytest.fixture(scope="module")
def latent_split():
    samples = windows(SynthConfig(seed=5, n_subjects=3, trials_per_subject=2))
    return split_dataset(samples, ("fraction", 0.7), seed=0)


def test_generative_axis_is_recovered(circ_pipeline):
    assert angular_difference(circ_pipeline.axis_ci.theta_deg, 290.0) <= 1.0
    assert circ_pipeline.axis_ci.fit_mse < 1e-4


def test_axes_in_expected_regions(small_pipeline):
    assert angular_difference(small_pipeline.axis_ci.theta_deg, 290.0) <= 20.0
    assert angular_difference(small_pipeline.axis_unci.theta_deg, 110.0) <= 20.0


def test_same_config_gives_identical_bundle(circ_split):
    cfg = PipelineConfig(models=("rf", "nn"), n_estimators=5, epochs=3, seed=4)
    a = dumps_json(train_pipeline(circ_split[0], cfg).to_dict())
    b = dumps_json(train_pipeline(circ_split[0], cfg).to_dict())
    assert a == b


def test_jitter_moves_axis_by_at_most_bound(circ_split):
    thetas = []
    for seed in (1, 2, 3):
        p = train_pipeline(circ_split[0], PipelineConfig(n_estimators=2, jitter_deg=5.0, seed=seed))
        thetas.append(p.axis_ci.theta_deg)
        assert p.angles != train_pipeline(circ_split[0], PipelineConfig(n_estimators=2)).angles
    for a in thetas:
        for b in thetas:
            assert angular_difference(a, b) <= 5.0


def test_reported_emotions_bound_estimated_error(circ_pipeline, circ_split):
    test = circ_split[1]
    rep = evaluate(circ_pipeline, test, "circumplex", "rf", emotion_source="reported")["ci"]
    est = evaluate(circ_pipeline, test, "circumplex", "rf")["ci"]
    assert rep.rmse <= est.rmse
    assert rep.rmse < 0.02


def test_direct_rf_error_near_noise_floor(latent_split):
    train, test = latent_split
    p = train_pipeline(train, PipelineConfig())
    m = evaluate(p, test, "direct", "rf")["ci"]
    assert 0.05 <= m.rmse <= 0.15


def test_calm_unit_emotion_scores_one(small_pipeline):
    p = dataclasses.replace(small_pipeline, axis_ci=AxisModel(290.0, 0.0))
    ci, unci, av_ci, _, degenerate = score_emotions(p, np.array([[0.0, 0.0, 0.0, 1.0]]), "circumplex")
    assert ci[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(av_ci[0], [np.cos(np.radians(290)), np.sin(np.radians(290))], atol=1e-12)
    # the uncomfort subset has no intensity, so that side is degenerate
    assert unci[0] == 0.0 and degenerate[0]


def test_all_zero_emotions_are_flagged(small_pipeline, small_dataset):
    x = small_dataset[2][0].features
    for method in ("circumplex", "kde"):
        r = estimate_batch(small_pipeline, x[None, :], method, "rf", emotions=np.zeros((1, 4)))
        assert r["ci"][0] == 0.0 and r["unci"][0] == 0.0
        assert r["degenerate"][0]


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("model", ["rf", "nn"])
def test_every_variant_from_one_bundle(small_pipeline, small_dataset, method, model):
    x = small_dataset[2][0].features
    e = estimate(small_pipeline, x, method, model)
    assert 0.0 <= e.ci <= 1.0 and 0.0 <= e.unci <= 1.0
    assert e.emotions.shape == (4,)
    assert len(e.av_ci) == 2 and len(e.av_unci) == 2


def test_evaluate_all_covers_six_variants(small_pipeline, small_dataset):
    test = [s for s in small_dataset[2] if s.trial_id == "S01T01"]
    table = evaluate_all(small_pipeline, test)
    assert set(table) == {(m, k) for m in METHODS for k in ("rf", "nn")}
    for metrics in table.values():
        assert set(metrics) == {"surprise", "anxiety", "boredom", "calmness", "ci", "unci"}
        assert all(v.mae <= v.rmse + 1e-15 for v in metrics.values())


def test_evaluate_is_pure(small_pipeline, small_dataset):
    test = [s for s in small_dataset[2] if s.trial_id == "S01T01"]
    before = dumps_json(small_pipeline.to_dict())
    a = evaluate(small_pipeline, test, "kde", "nn")
    b = evaluate(small_pipeline, test, "kde", "nn")
    assert a == b
    assert dumps_json(small_pipeline.to_dict()) == before


def test_prediction_log_is_appended(small_pipeline, small_dataset, tmp_path):
    test = [s for s in small_dataset[2] if s.trial_id == "S01T01"]
    path = tmp_path / "log.csv"
    evaluate(small_pipeline, test, "circumplex", "rf", log_path=path)
    evaluate(small_pipeline, test, "direct", "rf", log_path=path)
    header, rows = read_csv(path)
    assert header[:3] == ["subject", "trial", "t"] and "ci_pred" in header
    assert len(rows) == 2 * len(test)
    assert {r[header.index("method")] for r in rows} == {"circumplex(rf)", "direct(rf)"}


def test_bundle_dict_round_trip(small_pipeline, small_dataset):
    again = PipelineModel.from_dict(small_pipeline.to_dict())
    X = np.array([s.features for s in small_dataset[2][:20]])
    for method in METHODS:
        for model in ("rf", "nn"):
            a = estimate_batch(small_pipeline, X, method, model)
            b = estimate_batch(again, X, method, model)
            np.testing.assert_array_equal(a["ci"], b["ci"])
            np.testing.assert_array_equal(a["unci"], b["unci"])


def test_loto_partition_and_trace(small_dataset):
    samples = small_dataset[2]
    res = leave_one_trial_out(samples, "S02T02", "circumplex", "rf", PipelineConfig(n_estimators=10))
    expected = sorted({s.trial_id for s in samples} - {"S02T02"})
    assert res.pipeline.train_info["trials"] == expected
    assert res.pipeline.train_info["n_samples"] == sum(s.trial_id != "S02T02" for s in samples)
    t = [row[0] for row in res.trace]
    assert len(t) == sum(s.trial_id == "S02T02" for s in samples)
    assert all(b > a for a, b in zip(t, t[1:]))


def test_errors(small_pipeline, small_dataset):
    samples = small_dataset[2]
    with pytest.raises(InsufficientDataError):
        train_pipeline(samples[:40])
    with pytest.raises(InsufficientDataError):
        train_pipeline([s for s in samples if s.subject_id == "S01"])
    with pytest.raises(InsufficientDataError):
        evaluate(small_pipeline, [])
    with pytest.raises(ParameterError):
        evaluate(small_pipeline, samples[:3], "bogus")
    with pytest.raises(ParameterError):
        PipelineConfig(models=("svm",))
    only_rf = dataclasses.replace(small_pipeline, emotion_models={"rf": small_pipeline.emotion_models["rf"]})
    with pytest.raises(ParameterError):
        estimate(only_rf, samples[0].features, "circumplex", "nn")
