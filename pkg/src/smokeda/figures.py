"""Matplotlib SVG output with byte-deterministic settings."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hashsalt + no creation date keeps SVG bytes reproducible
matplotlib.rcParams.update({
    "svg.hashsalt": "smokeda",
    "figure.figsize": (6.0, 4.5),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})

GROUPS = (
    ("synthetic smoke", "tab:blue"),
    ("real smoke", "tab:green"),
    ("non-smoke", "tab:red"),
)


def group_index(y_s: int, y_d: int) -> int:
    if y_s == 1:
        return 0 if y_d == 0 else 1
    return 2


def _save(fig, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_feature_plot(embedding: np.ndarray, y_s, y_d, path: str):
    """2-D feature scatter colored synthetic smoke / real smoke / non-smoke."""
    embedding = np.asarray(embedding)
    y_s = np.asarray(y_s)
    y_d = np.asarray(y_d)
    if embedding.size == 0:
        raise ValueError("cannot plot an empty embedding")
    if not (len(embedding) == len(y_s) == len(y_d)):
        raise ValueError("embedding and labels must have equal length")
    groups = np.array([group_index(s, d) for s, d in zip(y_s, y_d)])
    fig, ax = plt.subplots()
    for gi, (name, color) in enumerate(GROUPS):
        sel = groups == gi
        if not sel.any():
            continue
        sc = ax.scatter(embedding[sel, 0], embedding[sel, 1], s=12,
                        color=color, label=name, alpha=0.8)
        sc.set_gid(f"points-{name.replace(' ', '-')}")
    ax.set_xlabel("embedding x")
    ax.set_ylabel("embedding y")
    ax.legend(loc="best")
    _save(fig, path)


def emit_line_plot(x, series: dict, path: str, xlabel: str, ylabel: str):
    """One line per named series over a shared x axis."""
    fig, ax = plt.subplots()
    for name, ys in series.items():
        ax.plot(x, ys, marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(loc="best")
    _save(fig, path)


def emit_bar_plot(labels, values, path: str, ylabel: str):
    fig, ax = plt.subplots()
    ax.bar(range(len(labels)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    _save(fig, path)
