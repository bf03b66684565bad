"""Ring-buffered real-time unCI estimation and offline replay.

Producers call :meth:`StreamEstimator.push` per channel; a consumer calls
:meth:`StreamEstimator.tick` once per second. Each tick copies the buffers,
runs the causal preprocessing and feature extraction on the copy, predicts
emotions with the bundled random forest, and scores them on the fitted
uncomfortability axis. Raw scores are smoothed by a trailing 10-tick mean.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ComfortIndexError, ParameterError, RoutingError
from .features import CHANNELS, EMOTIONS, TrialRecord, extract_features
from .pipeline import PipelineModel, estimate_batch
from .signals import Signal

log = logging.getLogger(__name__)

BUFFER_SECONDS = 60.0
FEATURE_SECONDS = 12.0
HISTORY = 10
TRACE_COLUMNS = ("t", "raw_unci", "smoothed_unci") + EMOTIONS


class RingBuffer:
    """Fixed-capacity circular store of (timestamp, sample) pairs for one channel."""

    def __init__(self, fs: float, seconds: float = BUFFER_SECONDS):
        if not fs > 0 or not seconds > 0:
            raise ParameterError("ring buffer needs positive fs and length")
        self.fs = float(fs)
        self.capacity = int(round(seconds * fs))
        self._x = np.zeros(self.capacity)
        self._t = np.zeros(self.capacity)
        self._head = 0  # next write position
        self._fill = 0
        self._last_t = -math.inf
        self.rejected = 0
        self._lock = threading.Lock()

    @property
    def fill(self) -> int:
        return self._fill

    @property
    def full(self) -> bool:
        return self._fill >= self.capacity

    def push(self, samples, timestamps) -> int:
        """Append samples; those not strictly after the newest stored timestamp are dropped."""
        x = np.asarray(samples, dtype=np.float64).ravel()
        ts = np.asarray(timestamps, dtype=np.float64).ravel()
        if x.shape != ts.shape:
            raise ParameterError("samples and timestamps differ in length")
        if x.size == 0:
            return 0
        # a sample is kept only if it is newer than everything kept before it
        running = np.maximum.accumulate(np.concatenate(([self._last_t], ts)))[:-1]
        keep = ts > running
        x, ts = x[keep], ts[keep]
        with self._lock:
            self.rejected += int((~keep).sum())
            if x.size == 0:
                return 0
            if x.size > self.capacity:
                x, ts = x[-self.capacity:], ts[-self.capacity:]
            idx = (self._head + np.arange(x.size)) % self.capacity
            self._x[idx] = x
            self._t[idx] = ts
            self._head = int((self._head + x.size) % self.capacity)
            self._fill = min(self.capacity, self._fill + x.size)
            self._last_t = float(ts[-1])
        return int(keep.sum())

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Time-ordered copies of the stored (timestamps, samples)."""
        with self._lock:
            n = self._fill
            idx = (self._head - n + np.arange(n)) % self.capacity
            return self._t[idx].copy(), self._x[idx].copy()


@dataclass(frozen=True)
class StreamEstimate:
    t: float
    raw_unci: float
    smoothed_unci: float
    emotions: tuple

    def row(self):
        return (self.t, self.raw_unci, self.smoothed_unci) + tuple(self.emotions)


@dataclass
class Smoother:
    size: int = HISTORY
    history: deque = field(default_factory=deque)

    def add(self, value: float) -> float:
        self.history.append(float(value))
        while len(self.history) > self.size:
            self.history.popleft()
        return float(np.mean(self.history))


def trailing_window(times: np.ndarray, values: np.ndarray, fs: float, seconds: float) -> Signal:
    n = min(values.size, int(round(seconds * fs)))
    return Signal(values[values.size - n:], fs, times[times.size - n] if n else 0.0)


def snapshot_estimate(pipeline: PipelineModel, windows: dict) -> tuple[float, np.ndarray]:
    """RF circumplex unCI and emotion estimates for one set of channel windows."""
    fv = extract_features(windows["ecg"], windows["gsr"], windows["pupil"], causal=True)
    r = estimate_batch(pipeline, np.asarray(fv, dtype=np.float64), method="circumplex", model="rf")
    return float(r["unci"][0]), r["emotions"][0]


class StreamEstimator:
    def __init__(self, pipeline: PipelineModel, rates: dict, buffer_seconds: float = BUFFER_SECONDS,
                 feature_seconds: float = FEATURE_SECONDS, history: int = HISTORY):
        if "rf" not in pipeline.emotion_models:
            raise ParameterError("streaming needs a bundle with the rf regressor")
        if set(rates) != set(CHANNELS):
            raise ParameterError(f"rates must cover channels {CHANNELS}")
        if not 0 < feature_seconds <= buffer_seconds:
            raise ParameterError("feature window must fit inside the buffer")
        self.pipeline = pipeline
        self.buffers = {c: RingBuffer(rates[c], buffer_seconds) for c in CHANNELS}
        self.feature_seconds = float(feature_seconds)
        self.smoother = Smoother(history)
        self.skipped = 0
        self.last_latency_s: Optional[float] = None

    def push(self, channel: str, samples, timestamps) -> int:
        try:
            buf = self.buffers[channel]
        except KeyError:
            raise RoutingError(f"unknown channel {channel!r}; expected one of {CHANNELS}") from None
        return buf.push(samples, timestamps)

    @property
    def ready(self) -> bool:
        return all(b.full for b in self.buffers.values())

    def tick(self, t_now: float) -> Optional[StreamEstimate]:
        """One estimate from the current buffer contents, or None if not ready or extraction failed."""
        if not self.ready:
            return None
        start = time.perf_counter()
        snaps = {c: b.snapshot() for c, b in self.buffers.items()}
        windows = {c: trailing_window(ts, x, self.buffers[c].fs, self.feature_seconds)
                   for c, (ts, x) in snaps.items()}
        try:
            raw, emotions = snapshot_estimate(self.pipeline, windows)
        except ComfortIndexError as exc:
            self.skipped += 1
            log.warning("tick at t=%.3f skipped: %s", t_now, exc)
            return None
        smoothed = self.smoother.add(raw)
        self.last_latency_s = time.perf_counter() - start
        return StreamEstimate(float(t_now), raw, smoothed, tuple(float(e) for e in emotions))


def replay(trial: TrialRecord, pipeline: PipelineModel, tick_hz: float = 1.0,
           buffer_seconds: float = BUFFER_SECONDS, feature_seconds: float = FEATURE_SECONDS,
           trace_path=None) -> list[StreamEstimate]:
    """Feed a recorded trial through a fresh estimator at simulated ``tick_hz`` ticks."""
    rates = {c: trial.channel(c).fs for c in CHANNELS}
    est = StreamEstimator(pipeline, rates, buffer_seconds, feature_seconds)
    sigs = {c: trial.channel(c) for c in CHANNELS}
    out = []
    if any(len(s) == 0 for s in sigs.values()):
        t_stop = -math.inf
    else:
        t_stop = max(s.t0 + (len(s) - 1) / s.fs for s in sigs.values())
    fed = dict.fromkeys(CHANNELS, 0)
    k = 1
    while k / tick_hz <= t_stop + 1e-9:
        t_now = k / tick_hz
        for c, s in sigs.items():
            hi = int(np.searchsorted(s.times, t_now, side="right"))
            if hi > fed[c]:
                est.push(c, s.samples[fed[c]:hi], s.times[fed[c]:hi])
                fed[c] = hi
        e = est.tick(t_now)
        if e is not None:
            out.append(e)
        k += 1
    if trace_path is not None:
        from .io import write_csv

        write_csv(trace_path, TRACE_COLUMNS, [e.row() for e in out])
    return out
