"""Figure rendering for CLI reports.

All renderers take plain report payloads (dicts/arrays), write a PNG next
to the delimited output and return the path. The evaluation code itself
never imports this module.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import METRICS

_DPI = 120


def _save(fig, path, meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = {"Description": " ".join(f"{k}={v}" for k, v in (meta or {}).items())} if meta else None
    fig.savefig(path, dpi=_DPI, bbox_inches="tight", metadata=text)
    plt.close(fig)
    return path


def render_segmentation(log_gaps: np.ndarray, gmm, threshold, path, meta: dict | None = None):
    """Log-gap histogram with the fitted components and the threshold line."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(log_gaps, bins=60, density=True, color="#b0c4de", edgecolor="white", label="log gaps")
    xs = np.linspace(float(np.min(log_gaps)), float(np.max(log_gaps)), 400)
    for i, (w, mu, sd) in enumerate(zip(gmm.weights, gmm.means, gmm.stdevs)):
        pdf = w * np.exp(-0.5 * ((xs - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
        ax.plot(xs, pdf, lw=2, label=f"component {i + 1}")
    ax.axvline(threshold.log_t, color="black", ls="--", lw=1.5,
               label=f"t = {threshold.t_days:.2f} days")
    ax.set_xlabel("ln inter-session gap (s)")
    ax.set_ylabel("density")
    ax.legend()
    return _save(fig, path, meta)


def render_metric_bars(means_by_label: dict, path, title: str = "", meta: dict | None = None):
    """Grouped bars: one cluster per metric, one bar per label."""
    labels = list(means_by_label)
    x = np.arange(len(METRICS))
    width = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(max(7, 1.6 * len(labels)), 4))
    for i, label in enumerate(labels):
        vals = [means_by_label[label].get(m, 0.0) for m in METRICS]
        ax.bar(x + i * width, vals, width, label=str(label))
    ax.set_xticks(x + (len(labels) - 1) * width / 2)
    ax.set_xticklabels(list(METRICS))
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path, meta)


def render_per_step(curve: dict, path, meta: dict | None = None):
    """Metric trajectories against the number of sessions used."""
    steps = sorted(int(s) for s in curve)
    fig, ax = plt.subplots(figsize=(7, 4))
    for m in METRICS:
        ax.plot(steps, [curve[s][m] for s in steps], marker="o", label=m)
    ax2 = ax.twinx()
    ax2.bar(steps, [curve[s]["n_tasks"] for s in steps], color="#dddddd", alpha=0.5, zorder=0)
    ax2.set_ylabel("n tasks", color="#888888")
    ax.set_xlabel("sessions used")
    ax.set_ylabel("score")
    ax.set_xticks(steps)
    ax.legend(fontsize=8)
    return _save(fig, path, meta)


def render_sweep(sweep: dict, path, meta: dict | None = None):
    """Metrics (left axis) and mean test sessions (right) vs threshold days."""
    days = sorted(float(d) for d in sweep)
    fig, ax = plt.subplots(figsize=(7, 4))
    for m in METRICS:
        ax.plot(days, [sweep[d]["means"][m] for d in days], marker="o", label=m)
    ax.set_xscale("log")
    ax.set_xlabel("threshold t (days)")
    ax.set_ylabel("score")
    ax2 = ax.twinx()
    ax2.plot(days, [sweep[d]["mean_test_sessions"] for d in days], color="gray", ls=":", marker="s")
    ax2.set_ylabel("mean sessions/task", color="gray")
    ax.legend(fontsize=8)
    return _save(fig, path, meta)


def render_attention(weights: dict, path, meta: dict | None = None):
    """Mean attention per session position, one line per session count."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for n in sorted(weights):
        w = np.asarray(weights[n], dtype=float)
        ax.plot(np.arange(1, len(w) + 1), w, marker="o", label=f"{len(w)} sessions")
    ax.set_xlabel("session position (1 = oldest)")
    ax.set_ylabel("mean attention weight")
    ax.legend(fontsize=8)
    return _save(fig, path, meta)
