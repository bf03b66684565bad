"""GSR preprocessing, tonic/phasic decomposition, SCR events and summary metrics."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import ParameterError
from .signals import (
    FilterSpec,
    Signal,
    design_butterworth_lowpass,
    filter_causal,
    filter_zero_phase,
    moving_median,
    smooth_boxzen,
)

GSR_CUTOFF_NORM = 0.078
GSR_ORDER = 4
SMOOTH_SECONDS = 0.75
MIN_SCR_AMPLITUDE = 0.01  # micro-siemens
ONSET_SLOPE = 0.05
MAX_RISE_S = 5.0


@lru_cache(maxsize=8)
def _gsr_coeffs(order, cutoff_norm):
    return design_butterworth_lowpass(FilterSpec(order, cutoff_norm))


def _check_gsr(gsr: Signal, min_fs=16.0, min_duration=10.0):
    if gsr.fs < min_fs:
        raise ParameterError(f"GSR sampling rate must be at least {min_fs:g} Hz, got {gsr.fs:g}")
    if gsr.duration < min_duration - 1e-9:
        raise ParameterError(f"GSR must span at least {min_duration:g} s, got {gsr.duration:.3f} s")


def preprocess_gsr(gsr: Signal, causal: bool = False, order: int = GSR_ORDER,
                   cutoff_norm: float = GSR_CUTOFF_NORM,
                   smooth_seconds: float = SMOOTH_SECONDS) -> Signal:
    """Order-4 Butterworth low-pass at 0.078 x Nyquist, then boxzen smoothing."""
    _check_gsr(gsr)
    coeffs = _gsr_coeffs(order, cutoff_norm)
    if causal:
        filtered = filter_causal(coeffs, gsr)
    else:
        filtered = filter_zero_phase(coeffs, gsr)
    return smooth_boxzen(filtered, smooth_seconds, causal=causal)


@dataclass(frozen=True)
class GsrDecomposition:
    tonic: Signal
    phasic: Signal


def _second_difference(t: np.ndarray) -> sparse.csr_matrix:
    """Second divided-difference operator on a possibly non-uniform grid."""
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    m = t.size - 2
    rows = np.repeat(np.arange(m), 3)
    cols = (np.arange(m)[:, None] + np.arange(3)[None, :]).ravel()
    vals = np.column_stack([2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2))]).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, t.size))


def asymmetric_baseline(x: np.ndarray, fs: float, stiffness_s: float = 4.0,
                        asymmetry: float = 0.01, rate_hz: float = 4.0,
                        max_iter: int = 30) -> np.ndarray:
    """Lower-envelope baseline by asymmetric least squares.

    Samples are decimated to ``rate_hz``; the baseline minimizes
    ``sum w (x - z)^2 + stiffness_s**4 * sum (z'')^2`` where ``w`` is
    ``asymmetry`` above the baseline and ``1 - asymmetry`` below, iterated
    until the weights stop changing. Linear trends carry no penalty, so a
    straight drift is reproduced exactly. The result is linearly
    interpolated back onto the full sample grid.
    """
    n = x.size
    step = max(1, int(round(fs / rate_hz)))
    idx = np.arange(0, n, step)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    if idx.size < 3:
        return np.full(n, float(np.min(x)))
    td = idx / fs
    offset = float(x[0])  # solving around zero keeps the level exact
    xd = x[idx] - offset
    D = _second_difference(td)
    P = (stiffness_s ** 4) * (D.T @ D)
    w = np.ones(idx.size)
    z = xd
    for _ in range(max_iter):
        A = (sparse.diags(w) + P).tocsc()
        z = spsolve(A, w * xd)
        w_new = np.where(xd > z, asymmetry, 1.0 - asymmetry)
        if np.array_equal(w_new, w):
            break
        w = w_new
    return np.interp(np.arange(n) / fs, td, z) + offset


def decompose_tonic_phasic(gsr: Signal, method: str = "als", causal: bool = False,
                           median_seconds: float = 4.0, smooth_seconds: float = 1.0,
                           stiffness_s: float = 4.0) -> GsrDecomposition:
    """Split a preprocessed GSR signal into tonic and phasic parts.

    ``method="als"`` (default) uses :func:`asymmetric_baseline`, which keeps
    the whole SCR amplitude in the phasic part. ``method="median"`` uses a
    ``median_seconds`` running median followed by ``smooth_seconds`` boxzen
    smoothing. In both cases ``phasic = gsr - tonic`` exactly.
    """
    _check_gsr(gsr, min_fs=1.0)
    x = gsr.samples
    if method == "als":
        tonic = asymmetric_baseline(x, gsr.fs, stiffness_s=stiffness_s)
    elif method == "median":
        med = moving_median(x, int(round(median_seconds * gsr.fs)), causal=causal)
        tonic = smooth_boxzen(gsr.with_samples(med), smooth_seconds, causal=causal).samples
    else:
        raise ParameterError(f"unknown decomposition method {method!r}")
    return GsrDecomposition(gsr.with_samples(tonic), gsr.with_samples(x - tonic))


@dataclass(frozen=True)
class ScrEvent:
    onset_t: float
    peak_t: float
    amplitude: float
    rise_time_ms: float
    recovery_time_ms: Optional[float]


def detect_scr_events(phasic: Signal, min_amplitude: float = MIN_SCR_AMPLITUDE,
                      recovery_fraction: float = 0.5, onset_slope: float = ONSET_SLOPE,
                      max_rise_s: float = MAX_RISE_S) -> list[ScrEvent]:
    """Derivative zero-crossing SCR detector.

    An onset is a sample where the first difference turns from non-positive
    to positive; its peak is the next sample where it turns back. Rises
    interrupted by a dip smaller than ``min_amplitude`` are merged into one
    response. Each onset is then moved forward to the last sample before
    the steepest point whose slope is at most ``onset_slope`` times that
    steepest slope, so slow baseline creep is not counted as rise. Responses
    below ``min_amplitude`` or rising for longer than ``max_rise_s`` are
    dropped. Recovery is the time from the peak until the signal falls below
    ``onset + (1 - recovery_fraction) * amplitude``; it is ``None`` when that
    does not happen before the next accepted onset or the end of the signal.
    """
    x = phasic.samples
    if x.size < 3:
        return []
    d = np.diff(x)
    # a rise already under way at the first sample has no observable onset
    up = np.flatnonzero((d[:-1] <= 0) & (d[1:] > 0)) + 1
    down = np.flatnonzero((d[:-1] > 0) & (d[1:] <= 0)) + 1

    def next_after(arr, i):
        k = np.searchsorted(arr, i, side="right")
        return arr[k] if k < arr.size else None

    pairs = []
    last_peak = None
    for on in up:
        if last_peak is not None and on < last_peak:
            continue
        pk = next_after(down, on)
        if pk is None:
            break
        while True:
            on2 = next_after(up, pk)
            pk2 = next_after(down, on2) if on2 is not None else None
            if pk2 is None or x[pk] - x[on2] >= min_amplitude or x[pk2] <= x[pk]:
                break
            pk = pk2
        last_peak = pk
        steep = on + int(np.argmax(d[on:pk]))
        flat = np.flatnonzero(d[on:steep] <= onset_slope * d[steep])
        start = on + int(flat[-1]) if flat.size else on
        if x[pk] - x[start] >= min_amplitude and (pk - start) / phasic.fs <= max_rise_s:
            pairs.append((start, pk))

    fs, t0 = phasic.fs, phasic.t0
    events = []
    for n, (on, pk) in enumerate(pairs):
        amp = float(x[pk] - x[on])
        stop = pairs[n + 1][0] if n + 1 < len(pairs) else x.size
        level = x[on] + (1.0 - recovery_fraction) * amp
        seg = x[pk:stop]
        below = np.flatnonzero(seg < level)
        recovery = None
        if below.size:
            j = pk + below[0]
            # linear interpolation between the straddling samples
            frac = (x[j - 1] - level) / (x[j - 1] - x[j])
            t_rec = (j - 1 + frac) / fs
            recovery = (t_rec - pk / fs) * 1000.0
        events.append(ScrEvent(float(t0 + on / fs), float(t0 + pk / fs), amp,
                               float((pk - on) / fs * 1000.0),
                               None if recovery is None else float(recovery)))
    return events


@dataclass(frozen=True)
class GsrMetrics:
    tonic_mean: float
    tonic_std: float
    phasic_mean: float
    phasic_std: float
    onset_rate: float
    peak_amp_mean: float
    rise_time_mean: float
    recovery_time_mean: float

    def as_tuple(self):
        return (self.tonic_mean, self.tonic_std, self.phasic_mean, self.phasic_std,
                self.onset_rate, self.peak_amp_mean, self.rise_time_mean, self.recovery_time_mean)


def _std(x):
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def gsr_metrics(dec: GsrDecomposition, events, duration_s: float) -> GsrMetrics:
    if not duration_s > 0:
        raise ParameterError("duration_s must be positive")
    tonic, phasic = dec.tonic.samples, dec.phasic.samples
    amps = [e.amplitude for e in events]
    rises = [e.rise_time_ms for e in events]
    recs = [e.recovery_time_ms for e in events if e.recovery_time_ms is not None]
    return GsrMetrics(
        tonic_mean=float(np.mean(tonic)),
        tonic_std=_std(tonic),
        phasic_mean=float(np.mean(phasic)),
        phasic_std=_std(phasic),
        onset_rate=len(events) / duration_s,
        peak_amp_mean=float(np.mean(amps)) if amps else 0.0,
        rise_time_mean=float(np.mean(rises)) if rises else 0.0,
        recovery_time_mean=float(np.mean(recs)) if recs else 0.0,
    )


def gsr_features(gsr: Signal, causal: bool = False, method: str = "als",
                 min_amplitude: float = MIN_SCR_AMPLITUDE) -> GsrMetrics:
    """Raw GSR window to the eight summary metrics."""
    pre = preprocess_gsr(gsr, causal=causal)
    dec = decompose_tonic_phasic(pre, method=method, causal=causal)
    events = detect_scr_events(dec.phasic, min_amplitude=min_amplitude)
    return gsr_metrics(dec, events, gsr.duration)
