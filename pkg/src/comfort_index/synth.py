"""Seeded synthetic trials with a known latent comfort trajectory.

Lower latent comfort raises heart rate, SCR frequency and amplitude, tonic
level and pupil diameter. Reports are noisy functions of the latent level
with emotions placed consistently with their circumplex angles: calm when
comfortable, anxious and surprised when not.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .circumplex import COMFORT_SUBSET, EmotionAngles, av_transform_batch, g_axis
from .errors import ParameterError
from .features import EmotionReport, TrialRecord
from .signals import Signal

CONDITIONS = {
    "velocity": ("normal", "fast"),
    "trajectory": ("normal", "extreme"),
    "sensitivity": ("normal", "sensitive"),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_subjects: int = 3
    trials_per_subject: int = 3
    duration_s: float = 240.0
    report_interval_s: float = 12.0
    first_report_s: float = 12.0
    # piecewise-constant latent comfort: (change times, levels); None draws one per trial
    latent: Optional[tuple] = None
    latent_overrides: dict = field(default_factory=dict)
    segment_range_s: tuple = (24.0, 60.0)
    # report model
    surprise_base: float = 0.1
    surprise_gain: float = 0.3
    boredom_base: float = 0.1
    boredom_gain: float = 0.2
    label_noise: float = 0.05
    comfort_mode: str = "latent"  # or "circumplex": comfort = g_axis(290, AV of reported emotions)
    # physiology
    hr_base_range: tuple = (60.0, 72.0)
    hr_delta_bpm: float = 25.0
    rr_jitter_s: float = 0.012
    scr_rate_base: float = 0.03
    scr_rate_gain: float = 0.25
    tonic_gain: float = 1.0
    pupil_gain: float = 0.8
    response_tau_s: float = 2.0
    ecg_noise: float = 0.02
    gsr_noise: float = 0.002
    pupil_noise: float = 0.02
    blink_rate: float = 0.25
    fs_ecg: float = 250.0
    fs_gsr: float = 128.0
    fs_pupil: float = 120.0

    def __post_init__(self):
        for name in ("fs_ecg", "fs_gsr", "fs_pupil", "duration_s", "report_interval_s"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("label_noise", "ecg_noise", "gsr_noise", "pupil_noise"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.n_subjects < 1 or self.trials_per_subject < 1:
            raise ParameterError("need at least one subject and one trial")
        if self.comfort_mode not in ("latent", "circumplex"):
            raise ParameterError(f"unknown comfort_mode {self.comfort_mode!r}")

    @classmethod
    def from_mapping(cls, m: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in m.items() if k in known})


def subject_id(s: int) -> str:
    return f"S{s + 1:02d}"


def trial_id(s: int, t: int) -> str:
    return f"S{s + 1:02d}T{t + 1:02d}"


def latent_at(change_times, levels, t):
    """Value of a piecewise-constant trajectory at times ``t``."""
    idx = np.searchsorted(np.asarray(change_times, dtype=np.float64), t, side="right") - 1
    return np.asarray(levels, dtype=np.float64)[np.clip(idx, 0, len(levels) - 1)]


def random_latent(rng, duration, segment_range):
    times, levels = [0.0], [float(rng.uniform(0.0, 1.0))]
    while True:
        nxt = times[-1] + rng.uniform(*segment_range)
        if nxt >= duration:
            break
        times.append(float(nxt))
        levels.append(float(rng.uniform(0.0, 1.0)))
    return times, levels


def first_order_lag(x, fs, tau):
    """Causal exponential smoothing with time constant ``tau`` seconds."""
    if tau <= 0:
        return x
    a = 1.0 - np.exp(-1.0 / (fs * tau))
    y = np.empty_like(x)
    acc = x[0]
    for i, v in enumerate(x):
        acc += a * (v - acc)
        y[i] = acc
    return y


_ECG_WAVES = (  # amplitude mV, width s, offset from R s
    (0.12, 0.025, -0.17),
    (-0.10, 0.010, -0.03),
    (1.00, 0.010, 0.0),
    (-0.20, 0.010, 0.03),
    (0.30, 0.040, 0.25),
)


def ecg_waveform(beat_times, fs, duration, rng, noise=0.02, spikes_only=False, wander=0.1):
    """Sum of Gaussian waves per beat, baseline wander and white noise."""
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    x = np.zeros(n)
    waves = ((1.0, 0.010, 0.0),) if spikes_only else _ECG_WAVES
    half = int(0.5 * fs)
    for bt in beat_times:
        c = int(round(bt * fs))
        lo, hi = max(0, c - half), min(n, c + half)
        if hi <= lo:
            continue
        tt = t[lo:hi] - bt
        for amp, w, off in waves:
            x[lo:hi] += amp * np.exp(-0.5 * ((tt - off) / w) ** 2)
    if wander:
        x += wander * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    if noise:
        x += rng.normal(0.0, noise, n)
    return x


def scr_shape(t, onset, amplitude, rise, tau):
    """Raised-cosine rise to ``amplitude`` over ``rise`` s, then exponential decay."""
    y = np.zeros_like(t)
    r = (t >= onset) & (t < onset + rise)
    y[r] = amplitude * (1.0 - np.cos(np.pi * (t[r] - onset) / rise)) / 2.0
    d = t >= onset + rise
    y[d] = amplitude * np.exp(-(t[d] - onset - rise) / tau)
    return y


def simulate_trial(cfg: SynthConfig, s: int, k: int):
    """One trial; returns the record and its ground-truth dictionary."""
    srng = np.random.default_rng([cfg.seed, s])
    hr_base = srng.uniform(*cfg.hr_base_range)
    tonic_base = srng.uniform(2.0, 6.0)
    pupil_base = srng.uniform(3.0, 4.0)
    rng = np.random.default_rng([cfg.seed, s, k, 1])
    tid = trial_id(s, k)
    D = cfg.duration_s

    if tid in cfg.latent_overrides:
        times, levels = cfg.latent_overrides[tid]
    elif cfg.latent is not None:
        times, levels = cfg.latent
    else:
        times, levels = random_latent(rng, D, cfg.segment_range_s)
    times, levels = [float(x) for x in times], [float(x) for x in levels]
    unc = lambda tt: 1.0 - latent_at(times, levels, tt)

    # ECG
    beats = []
    bt = rng.uniform(0.2, 0.8)
    while bt < D:
        beats.append(bt)
        hr = hr_base + cfg.hr_delta_bpm * float(unc(bt))
        bt += max(0.3, 60.0 / hr + rng.normal(0.0, cfg.rr_jitter_s))
    ecg = ecg_waveform(beats, cfg.fs_ecg, D, rng, cfg.ecg_noise)

    # GSR
    tg = np.arange(int(round(D * cfg.fs_gsr))) / cfg.fs_gsr
    ug = first_order_lag(unc(tg), cfg.fs_gsr, cfg.response_tau_s)
    gsr = tonic_base + cfg.tonic_gain * ug + 0.2 * np.sin(2 * np.pi * tg / 200.0 + rng.uniform(0, 2 * np.pi))
    onsets = []
    rate_max = cfg.scr_rate_base + cfg.scr_rate_gain
    tt = 0.0
    while True:
        tt += rng.exponential(1.0 / rate_max)
        if tt >= D:
            break
        u_now = float(unc(tt))
        if rng.uniform() * rate_max <= cfg.scr_rate_base + cfg.scr_rate_gain * u_now:
            amp = rng.uniform(0.1, 0.4) * (0.6 + 0.8 * u_now)
            rise = rng.uniform(0.8, 1.6)
            tau = rng.uniform(1.5, 3.0)
            gsr += scr_shape(tg, tt, amp, rise, tau)
            onsets.append(tt)
    gsr += rng.normal(0.0, cfg.gsr_noise, tg.size)

    # pupil
    tp = np.arange(int(round(D * cfg.fs_pupil))) / cfg.fs_pupil
    up = first_order_lag(unc(tp), cfg.fs_pupil, cfg.response_tau_s)
    pupil = pupil_base + cfg.pupil_gain * up + 0.05 * np.sin(2 * np.pi * 0.1 * tp + rng.uniform(0, 6.3))
    pupil += rng.normal(0.0, cfg.pupil_noise, tp.size)
    tb = 0.0
    while cfg.blink_rate > 0:
        tb += rng.exponential(1.0 / cfg.blink_rate)
        if tb >= D:
            break
        lo = int(tb * cfg.fs_pupil)
        pupil[lo:lo + int(rng.uniform(0.1, 0.25) * cfg.fs_pupil)] = 0.0

    # reports
    rt = np.arange(cfg.first_report_s, D - cfg.report_interval_s / 2.0 + 1e-9, cfg.report_interval_s)
    c = latent_at(times, levels, rt)
    u = 1.0 - c
    noise = lambda: rng.normal(0.0, cfg.label_noise, rt.size) if cfg.label_noise else 0.0
    clip = lambda v: np.clip(v, 0.0, 1.0)
    surprise = clip(cfg.surprise_base + cfg.surprise_gain * u + noise())
    anxiety = clip(u + noise())
    boredom = clip(cfg.boredom_base + cfg.boredom_gain * c + noise())
    calmness = clip(c + noise())
    if cfg.comfort_mode == "circumplex":
        emo = np.column_stack([calmness, surprise, boredom])
        av, _ = av_transform_batch(emo, EmotionAngles().of(COMFORT_SUBSET))
        comfort = g_axis(290.0, av)
    else:
        comfort = clip(c + noise())
    reports = [EmotionReport(float(t_), float(a), float(b), float(d), float(e), float(f))
               for t_, a, b, d, e, f in zip(rt, surprise, anxiety, boredom, calmness, comfort)]

    cond = {name: opts[int(rng.integers(len(opts)))] for name, opts in CONDITIONS.items()}
    rec = TrialRecord(subject_id(s), tid, cond,
                      Signal(ecg, cfg.fs_ecg), Signal(gsr, cfg.fs_gsr), Signal(pupil, cfg.fs_pupil), reports)
    truth = {
        "subject_id": subject_id(s),
        "trial_id": tid,
        "change_times": times,
        "levels": levels,
        "hr_base_bpm": float(hr_base),
        "hr_delta_bpm": cfg.hr_delta_bpm,
        "beat_times": [float(b) for b in beats],
        "scr_onsets": [float(o) for o in onsets],
        "report_times": rt.tolist(),
        "report_latent_comfort": c.tolist(),
    }
    return rec, truth


def synth_generate(cfg: SynthConfig):
    """All trials of the configured design, as ``(records, ground_truth)``."""
    records, truth = [], {}
    for s in range(cfg.n_subjects):
        for k in range(cfg.trials_per_subject):
            rec, gt = simulate_trial(cfg, s, k)
            records.append(rec)
            truth[rec.trial_id] = gt
    return records, truth


def spike_latent(duration=240.0, baseline=0.85, low=0.1, starts=(48.0, 120.0, 192.0), width=24.0):
    """Latent comfort with three dips, i.e. three uncomfort spikes."""
    times, levels = [0.0], [baseline]
    for s0 in starts:
        times += [s0, s0 + width]
        levels += [low, baseline]
    return times, levels
