"""Uniform time series, Butterworth low-pass filtering, smoothing and slicing.

Everything here is a pure function of its inputs. ``Signal`` instances hold a
read-only sample array so they can be shared freely between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy import signal as sps

from .errors import EmptyWindowError, InsufficientDataError, ParameterError

__all__ = [
    "Signal",
    "FilterSpec",
    "design_butterworth_lowpass",
    "filter_zero_phase",
    "filter_causal",
    "group_delay_seconds",
    "boxzen_kernel",
    "smooth_boxzen",
    "moving_median",
    "window_slice",
]


@dataclass(frozen=True, eq=False)
class Signal:
    """A uniformly sampled real-valued channel.

    Sample ``i`` sits at ``t0 + i / fs`` seconds.
    """

    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).ravel()
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        fs = float(self.fs)
        if not fs > 0 or not math.isfinite(fs):
            raise ParameterError(f"sampling rate must be positive, got {self.fs!r}")
        object.__setattr__(self, "fs", fs)
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.fs

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    @property
    def t_end(self) -> float:
        """Exclusive end time (one sample period past the last sample)."""
        return self.t0 + self.duration

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.fs, self.t0)


@dataclass(frozen=True)
class FilterSpec:
    order: int
    cutoff_norm: float  # fraction of Nyquist

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ParameterError(f"filter order must be a positive integer, got {self.order!r}")
        if not 0.0 < self.cutoff_norm < 1.0:
            raise ParameterError(f"cutoff_norm must lie in (0, 1), got {self.cutoff_norm!r}")

    @classmethod
    def from_hz(cls, order: int, cutoff_hz: float, fs: float) -> "FilterSpec":
        return cls(order, cutoff_hz / (fs / 2.0))


def design_butterworth_lowpass(spec: FilterSpec) -> tuple[np.ndarray, np.ndarray]:
    """Digital Butterworth low-pass (bilinear transform) as ``(b, a)``.

    The feedforward taps are rescaled so that ``sum(b) == sum(a)`` to
    machine precision, i.e. unit gain at DC.
    """
    if not isinstance(spec, FilterSpec):
        raise ParameterError("spec must be a FilterSpec")
    b, a = sps.butter(int(spec.order), spec.cutoff_norm, btype="low")
    # exactly rounded sums: the feedback taps nearly cancel at low cutoffs
    b = b * (math.fsum(a) / math.fsum(b))
    b[-1] += math.fsum(a) - math.fsum(b)
    return b, a


def _check_signal(sig: Signal):
    if len(sig) == 0:
        raise InsufficientDataError("signal is empty")


def filter_zero_phase(coeffs, sig: Signal) -> Signal:
    """Forward-backward filtering; magnitude response is squared, phase is zero.

    Initial states follow Gustafsson's method, which makes the result
    identical to backward-forward filtering, so time-reversed input gives
    exactly time-reversed output. Inputs must still exceed
    ``3 * max(len(b), len(a))`` samples.
    """
    b, a = coeffs
    _check_signal(sig)
    padlen = 3 * max(len(b), len(a))
    if len(sig) <= padlen:
        raise InsufficientDataError(
            f"signal of {len(sig)} samples is too short for zero-phase filtering "
            f"(needs more than {padlen})"
        )
    y = sps.filtfilt(b, a, sig.samples, method="gust")
    return sig.with_samples(y)


def filter_causal(coeffs, sig: Signal) -> Signal:
    """Single-pass causal filtering, started in steady state at the first sample.

    Introduces the filter's group delay (see :func:`group_delay_seconds`).
    """
    b, a = coeffs
    _check_signal(sig)
    zi = sps.lfilter_zi(b, a) * sig.samples[0]
    y, _ = sps.lfilter(b, a, sig.samples, zi=zi)
    return sig.with_samples(y)


def group_delay_seconds(coeffs, fs: float, freq_hz: float = 0.0) -> float:
    """Group delay of ``coeffs`` at ``freq_hz`` in seconds."""
    b, a = coeffs
    w = 2.0 * np.pi * freq_hz / fs
    _, gd = sps.group_delay((b, a), w=[w])
    return float(gd[0]) / fs


def boxzen_kernel(size: int) -> np.ndarray:
    """Boxcar followed by Parzen, folded into one normalized kernel."""
    if size < 3:
        raise ParameterError(f"boxzen window must span at least 3 samples, got {size}")
    box = np.ones(size) / size
    parzen = sps.windows.parzen(size)
    parzen = parzen / parzen.sum()
    k = np.convolve(box, parzen)
    return k / k.sum()


def smooth_boxzen(sig: Signal, window_seconds: float = 0.75, causal: bool = False) -> Signal:
    """Two-stage boxcar-then-Parzen smoothing.

    Parameters
    ----------
    sig : Signal
        Input channel.
    window_seconds : float
        Length of each stage; ``round(window_seconds * fs)`` samples, at least 3.
    causal : bool
        If True the combined kernel is applied on past samples only, with the
        start extended by the first value. Otherwise it is centered and edges
        are handled by reflection.
    """
    _check_signal(sig)
    size = int(round(window_seconds * sig.fs))
    k = boxzen_kernel(size)
    x = sig.samples
    if causal:
        xp = np.concatenate([np.full(k.size - 1, x[0]), x])
        y = np.convolve(xp, k, mode="valid")
    else:
        # k has odd length and is symmetric, so correlation == centered convolution
        y = ndimage.correlate1d(x, k, mode="reflect")
    return sig.with_samples(y)


def moving_median(x: np.ndarray, size: int, causal: bool = False) -> np.ndarray:
    """Running median over ``size`` samples (forced odd), edges extended by nearest value."""
    size = max(1, int(size) | 1)
    origin = size // 2 if causal else 0
    return ndimage.median_filter(np.asarray(x, dtype=np.float64), size=size, mode="nearest", origin=origin)


def window_slice(sig: Signal, center_t: float, half_width: float) -> tuple[Signal, float]:
    """Samples with timestamps in ``[center_t - half_width, center_t + half_width)``.

    Returns the sliced signal and its coverage, the available duration divided
    by ``2 * half_width``.
    """
    if half_width <= 0:
        raise ParameterError("half_width must be positive")
    n = len(sig)
    eps = 1e-9
    i0 = int(math.ceil((center_t - half_width - sig.t0) * sig.fs - eps))
    i1 = int(math.ceil((center_t + half_width - sig.t0) * sig.fs - eps))
    i0, i1 = max(i0, 0), min(i1, n)
    if i1 <= i0:
        raise EmptyWindowError(
            f"window [{center_t - half_width:g}, {center_t + half_width:g}) s does not "
            f"intersect signal [{sig.t0:g}, {sig.t_end:g}) s"
        )
    out = Signal(sig.samples[i0:i1], sig.fs, sig.t0 + i0 / sig.fs)
    coverage = min(1.0, out.duration / (2.0 * half_width))
    return out, coverage
