"""Figure rendering for the report paths.

Every report-producing stage writes its delimited output and, next to it,
a PNG rendering: the evaluation table becomes a per-run metric bar chart and
the working-set step traces become the recall/size ladder.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def plot_metrics_by_run(rows: Iterable[Mapping[str, object]], path) -> None:
    """Bar chart of MAP and P@5 per run, mirroring the report table."""
    rows = list(rows)
    if not rows:
        return
    names = [str(r["run"]) for r in rows]
    maps = [float(r["map"]) for r in rows]
    p5s = [float(r["p5"]) for r in rows]
    x = range(len(names))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(names)), 4.0))
    ax.bar([i - 0.2 for i in x], maps, width=0.4, label="MAP")
    ax.bar([i + 0.2 for i in x], p5s, width=0.4, label="P@5")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("score")
    ax.set_title("Retrieval effectiveness by run")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_recall_ladder(
    step_labels: Sequence[str],
    micro_recalls: Sequence[float],
    sizes: Sequence[float],
    path,
) -> None:
    """Working-set construction ladder: micro recall and mean size per step."""
    fig, ax1 = plt.subplots(figsize=(8.0, 4.0))
    x = range(len(step_labels))
    ax1.plot(list(x), micro_recalls, marker="o", color="tab:blue", label="micro recall")
    ax1.set_ylabel("micro recall", color="tab:blue")
    ax1.set_ylim(0.0, 1.05)
    ax1.set_xticks(list(x))
    ax1.set_xticklabels(step_labels, rotation=45, ha="right", fontsize=8)
    ax2 = ax1.twinx()
    ax2.plot(list(x), sizes, marker="s", color="tab:orange", label="mean set size")
    ax2.set_ylabel("mean working-set size", color="tab:orange")
    ax1.set_title("Working-set construction ladder")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_confidence_distribution(
    rows: Sequence[tuple], path
) -> None:
    """Box plot of predicted merge confidences per retrieval model."""
    by_model: dict = {}
    for _, model_id, conf in rows:
        by_model.setdefault(model_id, []).append(conf)
    if not by_model:
        return
    names = sorted(by_model)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(names)), 4.0))
    ax.boxplot([by_model[m] for m in names], tick_labels=names)
    ax.set_ylabel("predicted confidence")
    ax.set_title("Merge confidences by model")
    plt.setp(ax.get_xticklabels(), rotation=45, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
