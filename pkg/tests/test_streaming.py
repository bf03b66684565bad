import threading

import numpy as np
import pytest

from comfort_index.errors import ParameterError, RoutingError
from comfort_index.features import TrialRecord, extract_features
from comfort_index.io import read_csv
from comfort_index.pipeline import estimate_batch
from comfort_index.signals import Signal
from comfort_index.streaming import (
    HISTORY, TRACE_COLUMNS, RingBuffer, Smoother, StreamEstimator, replay,
)
from comfort_index.synth import SynthConfig, ecg_waveform, synth_generate

RATES = {"ecg": 250.0, "gsr": 128.0, "pupil": 120.0}


def seconds(fs, start, stop):
    n0, n1 = int(round(start * fs)), int(round(stop * fs))
    return np.arange(n0, n1) / fs


@pytest.fixture(scope="module")
def spike_trial(small_dataset):
    return next(r for r in small_dataset[0] if r.trial_id == "S01T01")


@pytest.fixture(scope="module")
def spike_trace(spike_trial, small_pipeline):
    return replay(spike_trial, small_pipeline)


# ---------------------------------------------------------------- ring buffer

def test_buffer_fills_at_capacity():
    buf = RingBuffer(128.0, 60.0)
    t = seconds(128.0, 0, 59)
    buf.push(t, t)
    assert not buf.full and buf.fill == t.size
    t2 = seconds(128.0, 59, 60)
    buf.push(t2, t2)
    assert buf.full and buf.fill == buf.capacity == 7680


def test_buffer_evicts_oldest():
    buf = RingBuffer(100.0, 60.0)
    t = seconds(100.0, 0, 61)
    assert buf.push(t * 2, t) == t.size
    ts, xs = buf.snapshot()
    assert ts.size == 6000
    assert ts[0] == pytest.approx(1.0) and ts[-1] == pytest.approx(60.99)
    np.testing.assert_array_equal(xs, ts * 2)
    assert np.all(np.diff(ts) > 0)


def test_buffer_oversized_push_keeps_tail():
    buf = RingBuffer(10.0, 2.0)
    t = seconds(10.0, 0, 5)
    buf.push(t, t)
    ts, _ = buf.snapshot()
    np.testing.assert_array_equal(ts, t[-20:])


def test_buffer_rejects_out_of_order():
    buf = RingBuffer(10.0, 5.0)
    assert buf.push([1, 2, 3], [0.0, 0.1, 0.2]) == 3
    assert buf.push([9, 4, 5], [0.1, 0.3, 0.3]) == 1
    assert buf.rejected == 2
    ts, xs = buf.snapshot()
    np.testing.assert_array_equal(ts, [0.0, 0.1, 0.2, 0.3])
    np.testing.assert_array_equal(xs, [1, 2, 3, 4])


def test_buffer_bad_arguments():
    with pytest.raises(ParameterError):
        RingBuffer(0.0)
    with pytest.raises(ParameterError):
        RingBuffer(10.0).push([1, 2], [0.0])


def test_snapshot_is_consistent_under_concurrent_push():
    buf = RingBuffer(1000.0, 1.0)
    stop = threading.Event()

    def produce():
        k = 0
        while not stop.is_set() and k < 200000:
            t = (k + np.arange(37)) / 1000.0
            buf.push(t, t)
            k += 37

    th = threading.Thread(target=produce)
    th.start()
    try:
        for _ in range(300):
            ts, xs = buf.snapshot()
            np.testing.assert_array_equal(ts, xs)
            if ts.size > 1:
                assert np.allclose(np.diff(ts), 1e-3)
    finally:
        stop.set()
        th.join()


# ---------------------------------------------------------------- estimator

def test_smoother_is_trailing_mean():
    sm = Smoother(3)
    assert [sm.add(v) for v in (1, 2, 3, 4)] == [1.0, 1.5, 2.0, 3.0]
    assert len(sm.history) == 3


def test_not_ready_before_buffer_full(small_pipeline, spike_trial):
    est = StreamEstimator(small_pipeline, RATES)
    for c in RATES:
        s = spike_trial.channel(c)
        n = int(round(59 * s.fs))
        est.push(c, s.samples[:n], s.times[:n])
    assert not est.ready and est.tick(59.0) is None
    for c in RATES:
        s = spike_trial.channel(c)
        lo, hi = int(round(59 * s.fs)), int(round(60 * s.fs))
        est.push(c, s.samples[lo:hi], s.times[lo:hi])
    assert est.ready
    e = est.tick(60.0)
    assert e is not None and e.smoothed_unci == e.raw_unci


def test_unknown_channel_is_a_routing_error(small_pipeline):
    est = StreamEstimator(small_pipeline, RATES)
    with pytest.raises(RoutingError):
        est.push("eeg", [0.0], [0.0])


def test_estimator_requires_rf_and_all_channels(small_pipeline):
    import dataclasses

    nn_only = dataclasses.replace(small_pipeline, emotion_models={"nn": small_pipeline.emotion_models["nn"]})
    with pytest.raises(ParameterError):
        StreamEstimator(nn_only, RATES)
    with pytest.raises(ParameterError):
        StreamEstimator(small_pipeline, {"ecg": 250.0})


def test_no_estimate_before_sixty_seconds(spike_trace, spike_trial):
    assert spike_trace[0].t == 60.0
    # ticks at 60, 61, ..., 239; the last sample sits just before 240 s
    assert len(spike_trace) == 180


def test_smoothed_recomputable_from_raw(spike_trace):
    raw = np.array([e.raw_unci for e in spike_trace])
    for i, e in enumerate(spike_trace):
        ref = np.mean(raw[max(0, i - HISTORY + 1):i + 1])
        assert abs(e.smoothed_unci - ref) <= 1e-12


def test_replay_is_deterministic(spike_trace, spike_trial, small_pipeline, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    again = replay(spike_trial, small_pipeline, trace_path=a)
    replay(spike_trial, small_pipeline, trace_path=b)
    assert [e.row() for e in again] == [e.row() for e in spike_trace]
    assert a.read_bytes() == b.read_bytes()
    header, rows = read_csv(a)
    assert tuple(header) == TRACE_COLUMNS and len(rows) == len(spike_trace)


def test_replay_matches_causal_offline_oracle(spike_trace, spike_trial, small_pipeline):
    sigs = {c: spike_trial.channel(c) for c in RATES}
    for e in spike_trace[::7]:
        windows = {}
        for c, s in sigs.items():
            last = int(np.floor(e.t * s.fs + 1e-9))  # index of the newest sample with t <= tick
            n = int(round(12.0 * s.fs))
            windows[c] = Signal(s.samples[last + 1 - n:last + 1], s.fs, (last + 1 - n) / s.fs)
        fv = extract_features(windows["ecg"], windows["gsr"], windows["pupil"], causal=True)
        r = estimate_batch(small_pipeline, np.asarray(fv), "circumplex", "rf")
        assert abs(r["unci"][0] - e.raw_unci) <= 1e-6
        np.testing.assert_allclose(r["emotions"][0], e.emotions, atol=1e-6)


def test_tick_latency_budget(spike_trial, small_pipeline):
    est = StreamEstimator(small_pipeline, RATES)
    for c in RATES:
        s = spike_trial.channel(c)
        est.push(c, s.samples, s.times)
    worst = 0.0
    for k in range(20):
        assert est.tick(240.0 + k) is not None
        worst = max(worst, est.last_latency_s)
    assert worst < 0.25


def test_empty_trial_gives_empty_trace(small_pipeline, tmp_path):
    empty = TrialRecord("S01", "S01T09", {}, Signal([], 250.0), Signal([], 128.0), Signal([], 120.0), [])
    path = tmp_path / "empty.csv"
    assert replay(empty, small_pipeline, trace_path=path) == []
    header, rows = read_csv(path)
    assert rows == []


def test_constant_physiology_smoothed_equals_raw(small_pipeline):
    D = 80.0
    ecg = ecg_waveform(np.arange(0.5, D, 1.0), 250.0, D, np.random.default_rng(0), noise=0.0, wander=0.0)
    trial = TrialRecord("S09", "S09T01", {}, Signal(ecg, 250.0),
                        Signal(np.full(int(D * 128), 4.0), 128.0), Signal(np.full(int(D * 120), 3.5), 120.0), [])
    trace = replay(trial, small_pipeline)
    assert len(trace) >= 20
    raw = np.array([e.raw_unci for e in trace])
    assert np.ptp(raw) <= 1e-12
    for e in trace[HISTORY:]:
        assert e.smoothed_unci == pytest.approx(e.raw_unci, abs=1e-12)


def test_smoothed_crossing_lags_raw_by_at_most_history(small_pipeline):
    cfg = SynthConfig(seed=11, n_subjects=1, trials_per_subject=1, latent=([0.0, 120.0], [1.0, 0.2]))
    records, _ = synth_generate(cfg)
    trace = replay(records[0], small_pipeline)
    t = np.array([e.t for e in trace])
    raw = np.array([e.raw_unci for e in trace])
    smooth = np.array([e.smoothed_unci for e in trace])
    old, new = raw[(t >= 70) & (t < 120)].mean(), raw[t >= 180].mean()
    assert new - old > 0.3
    mid = 0.5 * (old + new)
    after = t > 120
    raw_cross = t[after & (raw > mid)][0]
    smooth_cross = t[after & (smooth > mid)][0]
    assert 0 <= smooth_cross - raw_cross <= HISTORY
