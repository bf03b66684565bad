"""Trial data model, 12 s report windows, feature assembly and normalization."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .ecg import ecg_metrics
from .errors import ComfortIndexError, ParameterError
from .gsr import gsr_features
from .pupil import pupil_features
from .signals import Signal, window_slice

log = logging.getLogger(__name__)

EMOTIONS = ("surprise", "anxiety", "boredom", "calmness")
CHANNELS = ("ecg", "gsr", "pupil")


class FeatureVector(NamedTuple):
    """The 15 window metrics; field order is part of the file format."""

    mean_hr: float
    mean_rr: float
    sdnn: float
    rmssd: float
    pnn50: float
    tonic_mean: float
    tonic_std: float
    phasic_mean: float
    phasic_std: float
    onset_rate: float
    peak_amp_mean: float
    rise_time_mean: float
    recovery_time_mean: float
    pupil_mean: float
    pupil_std: float


FEATURE_NAMES = FeatureVector._fields
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class EmotionReport:
    t: float
    surprise: float
    anxiety: float
    boredom: float
    calmness: float
    comfort: float
    uncomfort: Optional[float] = None  # only when a dataset records it separately

    def __post_init__(self):
        for name in EMOTIONS + ("comfort",):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name}={v!r} outside [0, 1] in report at t={self.t}")
        if self.uncomfort is not None and not 0.0 <= self.uncomfort <= 1.0:
            raise ParameterError(f"uncomfort={self.uncomfort!r} outside [0, 1]")

    @property
    def emotions(self) -> np.ndarray:
        return np.array([getattr(self, e) for e in EMOTIONS])


@dataclass
class TrialRecord:
    subject_id: str
    trial_id: str
    condition: dict
    ecg: Signal
    gsr: Signal
    pupil: Signal
    reports: list = field(default_factory=list)

    def __post_init__(self):
        ts = [r.t for r in self.reports]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ParameterError(f"reports of trial {self.trial_id} are not sorted by time")

    def channel(self, name) -> Signal:
        return getattr(self, name)


@dataclass(frozen=True)
class WindowedSample:
    features: np.ndarray
    report: EmotionReport
    subject_id: str
    trial_id: str
    coverage: float


def extract_features(ecg: Signal, gsr: Signal, pupil: Signal, causal: bool = False,
                     gsr_method: str = "als") -> FeatureVector:
    """Run the three extractors on aligned windows and concatenate their metrics."""
    hrv = ecg_metrics(ecg, causal=causal)
    g = gsr_features(gsr, causal=causal, method=gsr_method)
    p = pupil_features(pupil, causal=causal)
    values = hrv.as_tuple() + g.as_tuple() + p.as_tuple()
    if not all(math.isfinite(v) for v in values):
        raise ParameterError("non-finite feature value")
    return FeatureVector(*(float(v) for v in values))


def label_windows(trial: TrialRecord, half_width: float = 6.0, min_coverage: float = 0.8,
                  gsr_method: str = "als") -> list[WindowedSample]:
    """One feature sample per report, from the signals within ``half_width`` of it.

    Reports whose window covers less than ``min_coverage`` of any channel, or
    whose window fails feature extraction, are dropped and logged.
    """
    out = []
    for rep in trial.reports:
        try:
            windows, cov = {}, 1.0
            for name in CHANNELS:
                w, c = window_slice(trial.channel(name), rep.t, half_width)
                windows[name], cov = w, min(cov, c)
            if cov < min_coverage:
                log.info("trial %s: report at t=%.2f dropped (coverage %.3f)", trial.trial_id, rep.t, cov)
                continue
            fv = extract_features(windows["ecg"], windows["gsr"], windows["pupil"], gsr_method=gsr_method)
        except ComfortIndexError as exc:
            log.info("trial %s: report at t=%.2f dropped (%s)", trial.trial_id, rep.t, exc)
            continue
        out.append(WindowedSample(np.array(fv, dtype=np.float64), rep, trial.subject_id, trial.trial_id, cov))
    return out


def feature_matrix(samples: Sequence[WindowedSample]) -> np.ndarray:
    if not samples:
        return np.empty((0, N_FEATURES))
    return np.vstack([s.features for s in samples])


def emotion_matrix(samples: Sequence[WindowedSample]) -> np.ndarray:
    if not samples:
        return np.empty((0, len(EMOTIONS)))
    return np.vstack([s.report.emotions for s in samples])


def comfort_labels(samples: Sequence[WindowedSample]) -> np.ndarray:
    return np.array([s.report.comfort for s in samples], dtype=np.float64)


def uncomfort_labels(samples: Sequence[WindowedSample], source: str = "complement") -> np.ndarray:
    """Uncomfortability labels.

    ``source="complement"`` derives them as ``1 - comfort`` (the tablet only
    records comfortability); ``source="column"`` requires an explicit value
    on every report.
    """
    if source == "complement":
        log.info("uncomfort labels derived as 1 - comfort")
        return 1.0 - comfort_labels(samples)
    if source == "column":
        vals = [s.report.uncomfort for s in samples]
        if any(v is None for v in vals):
            raise ParameterError("uncomfort_source='column' but some reports have no uncomfort value")
        return np.array(vals, dtype=np.float64)
    raise ParameterError(f"unknown uncomfort source {source!r}")


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_normalizer(train) -> Normalizer:
    """Z-score statistics (N-1 divisor) from training samples or a feature matrix."""
    X = train if isinstance(train, np.ndarray) else feature_matrix(train)
    if X.shape[0] < 2:
        raise ParameterError(f"normalizer needs at least 2 training samples, got {X.shape[0]}")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    const = ~(std > 0)
    if const.any():
        names = [FEATURE_NAMES[i] if X.shape[1] == N_FEATURES else str(i) for i in np.flatnonzero(const)]
        warnings.warn(f"constant features {names} get unit scale", RuntimeWarning, stacklevel=2)
        std = np.where(const, 1.0, std)
    return Normalizer(mean, std)


def apply_normalizer(n: Normalizer, fv) -> np.ndarray:
    return n.transform(fv)


def parse_split(mode) -> tuple:
    """``"fraction:0.7"``, ``"subjects:17,3"`` or ``"trial:<id>"`` to a tuple."""
    if isinstance(mode, tuple):
        return mode
    kind, _, arg = str(mode).partition(":")
    try:
        if kind == "fraction":
            return ("fraction", float(arg or 0.7))
        if kind == "subjects":
            a, b = arg.split(",")
            return ("subjects", int(a), int(b))
        if kind == "trial":
            return ("trial", arg)
    except ValueError as exc:
        raise ParameterError(f"bad split mode {mode!r}") from exc
    raise ParameterError(f"unknown split mode {mode!r}")


def split_dataset(samples: Sequence[WindowedSample], mode, seed: int = 0):
    """Deterministic train/test partition.

    Modes: ``("fraction", f)`` puts ``floor(f * N)`` shuffled samples in
    train; ``("subjects", n_train, n_test)`` assigns whole subjects;
    ``("trial", trial_id)`` holds out one trial. Both partitions keep the
    input order.
    """
    mode = parse_split(mode)
    samples = list(samples)
    rng = np.random.default_rng(seed)
    if mode[0] == "fraction":
        frac = mode[1]
        if not 0.0 < frac < 1.0:
            raise ParameterError(f"train fraction must lie in (0, 1), got {frac}")
        n_train = math.floor(frac * len(samples))
        if n_train == 0 or n_train == len(samples):
            raise ParameterError(f"cannot split {len(samples)} samples at fraction {frac}")
        train_idx = set(rng.permutation(len(samples))[:n_train].tolist())
        in_train = [i in train_idx for i in range(len(samples))]
    elif mode[0] == "subjects":
        _, n_train, n_test = mode
        subjects = sorted({s.subject_id for s in samples})
        if len(subjects) != n_train + n_test or n_test < 1 or n_train < 1:
            raise ParameterError(
                f"subject split {n_train}+{n_test} impossible with {len(subjects)} subjects")
        perm = rng.permutation(len(subjects))
        test_subjects = {subjects[i] for i in perm[:n_test]}
        in_train = [s.subject_id not in test_subjects for s in samples]
    elif mode[0] == "trial":
        tid = mode[1]
        in_train = [s.trial_id != tid for s in samples]
        if all(in_train):
            raise ParameterError(f"trial {tid!r} not present")
        if not any(in_train):
            raise ParameterError("holding out that trial leaves no training data")
    else:
        raise ParameterError(f"unknown split mode {mode!r}")
    train = [s for s, k in zip(samples, in_train) if k]
    test = [s for s, k in zip(samples, in_train) if not k]
    return train, test
