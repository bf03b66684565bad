"""Static figures written next to the CSV outputs (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def figure_path(csv_path, suffix=".png") -> Path:
    return Path(csv_path).with_suffix(suffix)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_trace(path, t, predicted, reported=None, smoothed=None, label="unCI", title=None):
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.plot(t, predicted, lw=1.0, color="tab:red", label=f"{label} estimate")
    if smoothed is not None:
        ax.plot(t, smoothed, lw=1.8, color="tab:purple", label=f"{label} smoothed")
    if reported is not None:
        ax.step(t, reported, where="mid", lw=1.2, color="k", alpha=0.6, label=f"{label} reported")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(label)
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def _disk(ax):
    ang = np.linspace(0, 2 * np.pi, 256)
    ax.plot(np.cos(ang), np.sin(ang), color="0.6", lw=0.8)
    ax.axhline(0, color="0.8", lw=0.6)
    ax.axvline(0, color="0.8", lw=0.6)
    ax.set_aspect("equal")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_xlabel("valence")
    ax.set_ylabel("arousal")


def plot_axis_fit(path, points, targets, theta_deg, title=None):
    points = np.asarray(points)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    _disk(ax)
    sc = ax.scatter(points[:, 0], points[:, 1], c=targets, s=10, cmap="viridis", vmin=0, vmax=1)
    th = np.deg2rad(theta_deg)
    ax.plot([0, np.cos(th)], [0, np.sin(th)], color="tab:red", lw=2, label=f"axis {theta_deg:.1f} deg")
    fig.colorbar(sc, ax=ax, shrink=0.8, label="target")
    ax.legend(loc="lower left", fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_kde(path, kde, resolution=121, title=None):
    g = np.linspace(-1, 1, resolution)
    V, A = np.meshgrid(g, g)
    Z = kde.score(np.column_stack([V.ravel(), A.ravel()])).reshape(V.shape)
    fig, ax = plt.subplots(figsize=(4.8, 4.5))
    im = ax.imshow(Z, origin="lower", extent=(-1, 1, -1, 1), cmap="magma", vmin=0, vmax=1)
    _disk(ax)
    ax.scatter(kde.points[:, 0], kde.points[:, 1], s=4, c="c", alpha=0.5)
    fig.colorbar(im, ax=ax, shrink=0.8, label="score")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_metrics(path, table: dict, targets, stat="rmse"):
    """Grouped bars: one group per target, one bar per (method, regressor) row of ``table``."""
    rows = list(table)
    x = np.arange(len(targets))
    w = 0.8 / max(len(rows), 1)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for i, key in enumerate(rows):
        vals = [getattr(table[key][t], stat) for t in targets]
        ax.bar(x + (i - (len(rows) - 1) / 2) * w, vals, w, label=key)
    ax.set_xticks(x, targets)
    ax.set_ylabel(stat.upper())
    ax.legend(fontsize=7, ncol=3)
    return _save(fig, path)
