"""Figures written next to the report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LOW_COLOR = "#4c72b0"
MID_COLOR = "#9a9a9a"
HIGH_COLOR = "#c44e52"


def _bucket_color(rating: int) -> str:
    if rating <= 2:
        return LOW_COLOR
    if rating <= 7:
        return MID_COLOR
    return HIGH_COLOR


def plot_rating_histogram(counts, path: str | Path, title: str = "Statement ratings") -> Path:
    """Bar chart of per-rating counts, coloured low / mid / high."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    xs = list(range(len(counts)))
    bars = ax.bar(xs, counts, color=[_bucket_color(x) for x in xs], width=0.85)
    for bar, n in zip(bars, counts):
        ax.annotate(str(n), (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=7)
    ax.set_xticks(xs)
    ax.set_xlabel("Rating")
    ax.set_ylabel("Count")
    ax.set_title(title)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_score_ranking(report, path: str | Path, top: int = 40) -> Path:
    """Horizontal bars of the highest-scoring variables with the threshold marked."""
    path = Path(path)
    entries = [e for e in report.entries if not e.score.unreferenced][:top]
    threshold = report.meta.get("threshold", 0.0)
    height = max(2.0, 0.25 * len(entries) + 1.0)
    fig, ax = plt.subplots(figsize=(6.4, height))
    labels = [str(e.variable) for e in entries][::-1]
    values = [e.score.score for e in entries][::-1]
    colors = [HIGH_COLOR if e.candidate else LOW_COLOR for e in entries][::-1]
    ax.barh(range(len(entries)), values, color=colors)
    ax.set_yticks(range(len(entries)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.axvline(threshold, color="black", linestyle="--", linewidth=1)
    ax.set_xlim(0, 10)
    ax.set_xlabel("UPR score")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
