"""Report figures, rendered straight to files next to the data outputs.

All figures go through the Agg backend and are saved with pinned metadata so
repeated runs of the same seed produce byte-identical PNGs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=120, metadata={"Software": "featshift"})


def plot_feature_stats(values, thresholds, path: str, localized=(), title: str = "") -> None:
    """Bar chart of per-feature statistics against their thresholds."""
    values = np.asarray(values, dtype=float)
    d = values.shape[0]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.32 * d), 3.6))
    colors = ["#c23b22" if j in set(localized) else "#4878a8" for j in range(d)]
    ax.bar(np.arange(d), values, color=colors)
    if thresholds is not None:
        thr = np.asarray(thresholds, dtype=float)
        ax.step(np.arange(d + 1) - 0.5, np.append(thr, thr[-1]), where="post",
                color="black", lw=1.0, label="threshold")
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel("feature")
    ax.set_ylabel("statistic")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_stream(steps, path: str, t_comp=None, title: str = "") -> None:
    """Per-step trace of the largest threshold-relative statistic.

    ``steps`` is an iterable of dicts with keys step, max_ratio, detected.
    """
    steps = list(steps)
    idx = np.array([s["step"] for s in steps])
    ratio = np.array([s["max_ratio"] for s in steps])
    det = np.array([s["detected"] for s in steps], dtype=bool)
    fig, ax = plt.subplots(figsize=(8.0, 3.2))
    ax.plot(idx, ratio, color="#4878a8", lw=1.2)
    ax.axhline(1.0, color="black", lw=0.8, ls="--")
    if det.any():
        ax.plot(idx[det], ratio[det], "o", ms=4, color="#c23b22", label="detected")
        ax.legend(frameon=False, fontsize=8)
    if t_comp is not None:
        ax.axvline(t_comp, color="#666666", lw=1.0, ls=":")
    ax.set_xlabel("window step")
    ax.set_ylabel("max statistic / threshold")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_experiment_cells(rows, path: str, title: str = "") -> None:
    """Grouped precision/recall bars, one group per experiment cell."""
    rows = list(rows)
    labels = [f"{r.get('graph', '')}\nMI={r.get('mi', '')}" for r in rows]
    prec = [float(r["precision"]) for r in rows]
    rec = [float(r["recall"]) for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(rows)), 3.6))
    ax.bar(x - 0.18, prec, width=0.36, label="precision", color="#4878a8")
    ax.bar(x + 0.18, rec, width=0.36, label="recall", color="#8a9a5b")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
