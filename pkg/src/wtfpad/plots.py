"""Figure rendering for the CLI report path.

Every report the CLI writes as CSV also gets a figure rendered next to
it. Rendering is headless (Agg) and byte-deterministic so repeated runs
with the same seed produce identical output directories.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_FIGSIZE = (6.0, 4.5)
_DPI = 150


def _finish(fig, ax, path: str, xlabel: str, ylabel: str, title: str) -> None:
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_roc_figure(curves: dict[str, list[tuple[float, float]]], path: str,
                    title: str = "Monitored-page detection ROC") -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for name, points in curves.items():
        xs, ys = zip(*points)
        ax.plot(xs, ys, marker="o", markersize=3, label=name)
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", label="random")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    _finish(fig, ax, path, "false positive rate", "true positive rate", title)


def save_proc_figure(curves: dict[str, list[tuple[float, float]]], path: str,
                     baselines: dict[str, float] | None = None,
                     title: str = "Precision-recall (P-ROC)") -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for name, points in curves.items():
        xs, ys = zip(*points)
        ax.plot(xs, ys, marker="o", markersize=3, label=name)
    for name, value in (baselines or {}).items():
        ax.axhline(value, linestyle="--", color="gray", alpha=0.7,
                   label=f"random ({name})")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.05)
    _finish(fig, ax, path, "recall", "precision", title)


def save_tradeoff_figure(rows: list[tuple[float, float, float]], path: str,
                         title: str = "Bandwidth overhead vs. attack accuracy") -> None:
    """Rows of (percentile, median bandwidth overhead, mean accuracy)."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    overheads = [r[1] for r in rows]
    accuracies = [r[2] for r in rows]
    ax.plot(overheads, accuracies, marker="o", label="percentile sweep")
    for p, oh, acc in rows:
        ax.annotate(f"p={p:g}", (oh, acc), textcoords="offset points",
                    xytext=(5, 4), fontsize=8)
    _finish(fig, ax, path, "median bandwidth overhead ratio",
            "mean closed-world accuracy", title)


def save_world_size_figure(curves: dict[str, list[tuple[int, float]]], path: str,
                           baseline: list[tuple[int, float]] | None = None,
                           title: str = "P-ROC AUC vs. world size") -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for name, points in curves.items():
        xs, ys = zip(*points)
        ax.plot(xs, ys, marker="o", label=name)
    if baseline:
        xs, ys = zip(*baseline)
        ax.plot(xs, ys, linestyle="--", color="gray", label="random")
    _finish(fig, ax, path, "world size (background pages)", "P-ROC AUC", title)


def save_overhead_figure(per_trace: dict[str, list[float]], path: str,
                         title: str = "Per-trace bandwidth overhead") -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    names = list(per_trace)
    ax.boxplot([per_trace[n] for n in names], tick_labels=names, showfliers=False)
    ax.set_xlabel("defense")
    ax.set_ylabel("bandwidth overhead ratio")
    ax.set_title(title)
    ax.grid(True, alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
