"""R-peak detection, RR-interval series and time-domain HRV metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy import signal as sps

from .errors import InsufficientDataError, ParameterError
from .signals import FilterSpec, Signal, design_butterworth_lowpass, filter_causal, filter_zero_phase, group_delay_seconds, moving_median

RR_MIN_MS = 250.0
RR_MAX_MS = 3000.0
REFRACTORY_S = 0.25


@lru_cache(maxsize=32)
def _lowpass_coeffs(fs):
    return design_butterworth_lowpass(FilterSpec(2, min(30.0 / (fs / 2.0), 0.9)))


@lru_cache(maxsize=32)
def _lowpass_delay(fs):
    # group delay near the QRS band; only meaningful for the causal path
    return group_delay_seconds(_lowpass_coeffs(fs), fs, 10.0)


def enhance_ecg(ecg: Signal, causal: bool = False) -> np.ndarray:
    """Baseline-removed, 30 Hz low-passed ECG (the signal R-peaks are located on).

    The baseline is a 0.6 s running median, which passes the narrow QRS
    complex untouched while following respiration wander.
    """
    x = ecg.samples
    base = moving_median(x, int(round(0.6 * ecg.fs)), causal=causal)
    hp = ecg.with_samples(x - base)
    coeffs = _lowpass_coeffs(ecg.fs)
    if causal:
        return filter_causal(coeffs, hp).samples
    return filter_zero_phase(coeffs, hp).samples


def detect_r_peaks(ecg: Signal, causal: bool = False, threshold_ratio: float = 0.5,
                   history: int = 8) -> np.ndarray:
    """Pan-Tompkins style R-peak detector.

    The enhanced ECG is differentiated, squared and integrated over a 150 ms
    moving window. Candidate maxima of the integrated envelope at least
    250 ms apart are accepted when they exceed ``threshold_ratio`` times the
    mean height of the last ``history`` accepted peaks. Each accepted
    candidate is then located on the enhanced ECG as the largest sample within
    150 ms.

    Returns
    -------
    numpy.ndarray
        Strictly increasing peak timestamps in seconds; empty if none found.
    """
    if ecg.fs < 100:
        raise ParameterError(f"ECG sampling rate must be at least 100 Hz, got {ecg.fs:g}")
    if ecg.duration < 2.0:
        raise ParameterError(f"ECG must span at least 2 s, got {ecg.duration:.3f} s")
    fs = ecg.fs
    enh = enhance_ecg(ecg, causal=causal)
    energy = np.gradient(enh) ** 2
    width = max(1, int(round(0.15 * fs)))
    if causal:
        env = ndimage.uniform_filter1d(energy, width, mode="nearest", origin=(width - 1) // 2)
    else:
        env = ndimage.uniform_filter1d(energy, width, mode="nearest")
    if not np.any(env > 0):
        return np.empty(0)
    refractory = int(np.ceil(REFRACTORY_S * fs))
    cand, _ = sps.find_peaks(env, distance=refractory)
    if cand.size == 0:
        return np.empty(0)

    first = env[: int(2 * fs)]
    recent = [float(first.max())]
    accepted = []
    for c in cand:
        h = env[c]
        if h >= threshold_ratio * np.mean(recent[-history:]):
            accepted.append(c)
            recent.append(float(h))

    search = int(round(0.15 * fs))
    locs = []
    for c in accepted:
        lo, hi = max(0, c - search), min(enh.size, c + search + 1)
        i = lo + int(np.argmax(enh[lo:hi]))
        # a local maximum must not sit on the search boundary unless it is a signal edge
        if 0 < i < enh.size - 1 and enh[i] >= enh[i - 1] and enh[i] >= enh[i + 1]:
            locs.append(i)

    peaks = []
    for i in sorted(set(locs)):
        if peaks and i - peaks[-1] < refractory:
            if enh[i] > enh[peaks[-1]]:
                peaks[-1] = i
            continue
        peaks.append(i)
    times = ecg.t0 + np.asarray(peaks, dtype=np.float64) / fs
    if causal:
        times = times - _lowpass_delay(fs)
    return times


@dataclass(frozen=True)
class RrSeries:
    """RR intervals that survived artifact rejection.

    ``contiguous[k]`` is False when intervals ``k`` and ``k + 1`` were not
    neighbours before rejection; such pairs are skipped for successive
    differences.
    """

    intervals_ms: np.ndarray
    peak_times: np.ndarray
    contiguous: np.ndarray = field(default=None)
    n_rejected: int = 0

    def __post_init__(self):
        iv = np.asarray(self.intervals_ms, dtype=np.float64)
        object.__setattr__(self, "intervals_ms", iv)
        object.__setattr__(self, "peak_times", np.asarray(self.peak_times, dtype=np.float64))
        if self.contiguous is None:
            object.__setattr__(self, "contiguous", np.ones(max(iv.size - 1, 0), dtype=bool))
        else:
            object.__setattr__(self, "contiguous", np.asarray(self.contiguous, dtype=bool))

    @classmethod
    def from_intervals(cls, intervals_ms) -> "RrSeries":
        iv = np.asarray(intervals_ms, dtype=np.float64)
        peaks = np.concatenate([[0.0], np.cumsum(iv) / 1000.0])
        return cls(iv, peaks)


def rr_from_peaks(peaks, low_ms: float = RR_MIN_MS, high_ms: float = RR_MAX_MS) -> RrSeries:
    """RR intervals from R-peak timestamps, dropping intervals outside ``[low_ms, high_ms]``."""
    peaks = np.asarray(peaks, dtype=np.float64)
    if peaks.size < 2:
        raise InsufficientDataError(f"need at least 2 peaks, got {peaks.size}")
    iv = np.diff(peaks) * 1000.0
    keep = (iv >= low_ms) & (iv <= high_ms)
    idx = np.flatnonzero(keep)
    contiguous = np.diff(idx) == 1
    return RrSeries(iv[keep], peaks, contiguous, int(iv.size - idx.size))


@dataclass(frozen=True)
class HrvMetrics:
    mean_hr: float
    mean_rr: float
    sdnn: float
    rmssd: float
    pnn50: float

    def as_tuple(self):
        return (self.mean_hr, self.mean_rr, self.sdnn, self.rmssd, self.pnn50)


def successive_differences(rr: RrSeries) -> np.ndarray:
    return np.diff(rr.intervals_ms)[rr.contiguous]


def hrv_metrics(rr) -> HrvMetrics:
    """Mean HR, mean RR, SDNN, RMSSD and pNN50 of an RR series.

    Mean HR averages instantaneous rates ``60000 / RR``; SDNN uses the N-1
    divisor; pNN50 counts successive differences strictly above 50 ms.
    """
    if not isinstance(rr, RrSeries):
        rr = RrSeries.from_intervals(rr)
    iv = rr.intervals_ms
    if iv.size < 3:
        raise InsufficientDataError(f"need at least 3 RR intervals, got {iv.size}")
    diffs = successive_differences(rr)
    if diffs.size == 0:
        raise InsufficientDataError("no pair of adjacent RR intervals survived rejection")
    return HrvMetrics(
        mean_hr=float(np.mean(60000.0 / iv)),
        mean_rr=float(np.mean(iv)),
        sdnn=float(np.std(iv, ddof=1)),
        rmssd=float(np.sqrt(np.mean(diffs ** 2))),
        pnn50=float(100.0 * np.count_nonzero(np.abs(diffs) > 50.0) / diffs.size),
    )


def ecg_metrics(ecg: Signal, causal: bool = False) -> HrvMetrics:
    return hrv_metrics(rr_from_peaks(detect_r_peaks(ecg, causal=causal)))
