"""Figure rendering for run reports; every figure lands next to its delimited twin."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .loop import BudgetLedger
from .resolve import Metrics

# Fixed metadata keeps PNG output byte-identical across re-runs.
_PNG_META = {"Software": "aler"}


def _save(fig, path: Path):
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def render_f1_history(path: str | Path, f1_history: list[tuple[int, int, float]]):
    """Validation F1 per iteration, one line per chunk."""
    fig, ax = plt.subplots(figsize=(7, 4))
    by_chunk: dict[int, list[tuple[int, float]]] = {}
    for chunk, iteration, f1 in f1_history:
        by_chunk.setdefault(chunk, []).append((iteration, f1))
    for chunk in sorted(by_chunk):
        points = sorted(by_chunk[chunk])
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=f"chunk {chunk}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("validation F1")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    if by_chunk:
        ax.legend()
    ax.set_title("Active-learning progress")
    fig.tight_layout()
    _save(fig, Path(path))


def render_budget(path: str | Path, ledger: BudgetLedger):
    """Label spending by phase."""
    labels = ["seed", "validation", "loop"]
    values = [ledger.seed_count, ledger.validation_count, ledger.loop_total]
    fig, ax = plt.subplots(figsize=(5, 4))
    bars = ax.bar(labels, values, color=["#777777", "#4c72b0", "#dd8452"])
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), str(value),
                ha="center", va="bottom")
    title = f"Oracle labels (total {ledger.total}"
    if ledger.hard_cap is not None:
        title += f" / cap {ledger.hard_cap}"
    title += ", truncated)" if ledger.truncated else ")"
    ax.set_title(title)
    ax.set_ylabel("labels")
    fig.tight_layout()
    _save(fig, Path(path))


def render_metrics(path: str | Path, metrics: Metrics):
    """Bar summary of the resolution quality metrics."""
    names = ["precision", "recall", "f1", "blocking_recall"]
    values = [metrics.precision, metrics.recall, metrics.f1, metrics.blocking_recall]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, values, color="#4c72b0")
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), f"{value:.3f}",
                ha="center", va="bottom")
    ax.set_ylim(0.0, 1.1)
    ax.set_title(f"Resolution quality (TP {metrics.tp} / FP {metrics.fp} / FN {metrics.fn})")
    fig.tight_layout()
    _save(fig, Path(path))
