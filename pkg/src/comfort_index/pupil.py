"""Pupil diameter cleaning and summary metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientDataError, ParameterError, QualityError
from .signals import FilterSpec, Signal, design_butterworth_lowpass, filter_causal, filter_zero_phase, moving_median

PUPIL_CUTOFF_HZ = 3.0
PUPIL_ORDER = 2


def _valid(x):
    return np.isfinite(x) & (x > 0)


def combine_eyes(left: Signal, right: Signal) -> Signal:
    """Per-sample mean of the valid eyes; 0 (invalid) where neither eye is valid."""
    if len(left) != len(right) or left.fs != right.fs:
        raise ParameterError("left and right pupil channels must share length and rate")
    l, r = left.samples, right.samples
    vl, vr = _valid(l), _valid(r)
    count = vl.astype(float) + vr.astype(float)
    total = np.where(vl, l, 0.0) + np.where(vr, r, 0.0)
    out = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return left.with_samples(out)


def blink_mask(x: np.ndarray, fs: float, mad_k: float = 4.0, median_seconds: float = 1.0,
               mad_floor: float = 0.01) -> np.ndarray:
    """True where a sample is a dropout or an outlier from the running median.

    The MAD of a smooth trace can be exactly zero (a running median
    reproduces monotone stretches), so it is floored at ``mad_floor`` times
    the median valid level.
    """
    bad = ~_valid(x)
    if bad.all():
        return bad
    idx = np.arange(x.size)
    filled = np.interp(idx, idx[~bad], x[~bad])
    resid = filled - moving_median(filled, int(round(median_seconds * fs)))
    r = resid[~bad]
    mad = max(float(np.median(np.abs(r - np.median(r)))), mad_floor * float(np.median(x[~bad])))
    return bad | (np.abs(resid) > mad_k * mad)


def preprocess_pupil(pupil: Signal, fs_hint: Optional[float] = None, causal: bool = False,
                     mad_k: float = 4.0, max_invalid: float = 0.5) -> Signal:
    """Replace blinks by linear interpolation, then a 3 Hz order-2 Butterworth low-pass.

    ``fs_hint`` overrides the nominal rate when designing the filter (for
    devices whose effective frame rate differs from the header value).
    Interpolation holds the first/last valid value at the edges, so it never
    extrapolates.
    """
    if pupil.duration < 4.0 - 1e-9:
        raise ParameterError(f"pupil signal must span at least 4 s, got {pupil.duration:.3f} s")
    x = pupil.samples
    bad = blink_mask(x, pupil.fs, mad_k=mad_k)
    if bad.mean() > max_invalid:
        raise QualityError(f"{100 * bad.mean():.1f}% of pupil samples are invalid")
    idx = np.arange(x.size)
    clean = np.interp(idx, idx[~bad], x[~bad]) if bad.any() else x
    fs = float(fs_hint) if fs_hint else pupil.fs
    coeffs = design_butterworth_lowpass(FilterSpec(PUPIL_ORDER, PUPIL_CUTOFF_HZ / (fs / 2.0)))
    sig = pupil.with_samples(clean)
    return filter_causal(coeffs, sig) if causal else filter_zero_phase(coeffs, sig)


@dataclass(frozen=True)
class PupilMetrics:
    pupil_mean: float
    pupil_std: float

    def as_tuple(self):
        return (self.pupil_mean, self.pupil_std)


def pupil_metrics(pupil: Signal) -> PupilMetrics:
    x = pupil.samples
    if x.size < 2:
        raise InsufficientDataError("pupil metrics need at least 2 samples")
    return PupilMetrics(float(np.mean(x)), float(np.std(x, ddof=1)))


def pupil_features(pupil: Signal, causal: bool = False) -> PupilMetrics:
    return pupil_metrics(preprocess_pupil(pupil, causal=causal))
