"""Rendering of run artifacts: trade-off figures, training curves and feature
usage histograms, written as PNG files next to the delimited summaries."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .hull import convex_hull_select
from .train import RunReport, TradeoffPoint, write_points

log = logging.getLogger(__name__)


def render_tradeoff_figure(points: list[TradeoffPoint], path) -> list[TradeoffPoint]:
    """Scatter all points in cost/accuracy space with the validation frontier.

    Returns the hull-selected validation points so callers can reuse the
    selection for the summary table.
    """
    validation = [p for p in points if p.split == "validation"]
    test = [p for p in points if p.split == "test"]
    selected = convex_hull_select(validation) if validation else []

    fig, ax = plt.subplots(figsize=(6, 4.5))
    if validation:
        ax.scatter([p.mean_cost for p in validation],
                   [p.accuracy for p in validation],
                   s=28, c="tab:blue", alpha=0.7, label="validation")
    if test:
        ax.scatter([p.mean_cost for p in test], [p.accuracy for p in test],
                   s=28, c="tab:orange", alpha=0.7, marker="s", label="test")
    if selected:
        frontier = sorted(selected, key=lambda p: (p.mean_cost, p.accuracy))
        ax.plot([p.mean_cost for p in frontier], [p.accuracy for p in frontier],
                "k--", linewidth=1.5, marker="o", markersize=5,
                label="selected frontier")
    ax.set_xlabel("mean feature cost")
    ax.set_ylabel("accuracy")
    ax.set_title("cost / accuracy trade-off")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return selected


def render_progress_figure(report: RunReport, path) -> None:
    """Per-epoch train and validation reward curves for one run."""
    epochs = [e["epoch"] for e in report.epochs]
    train = [e["train_reward"] for e in report.epochs]
    val = [e["validation_reward"] for e in report.epochs]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, val, marker="o", label="validation reward")
    has_train = [(e, r) for e, r in zip(epochs, train) if r is not None]
    if has_train:
        ax.plot([e for e, _ in has_train], [r for _, r in has_train],
                marker="s", label="train reward")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean episode reward")
    ax.set_title(f"training progress ({report.run_id})")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_feature_histogram(report: RunReport, path) -> None:
    """How many features the final greedy policy bought per sample."""
    hist = report.final_validation["feature_usage_histogram"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(hist)), hist, color="tab:blue")
    ax.set_xlabel("features used")
    ax.set_ylabel("samples")
    ax.set_title(f"feature usage ({report.run_id})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def find_reports(out_dir: Path) -> list[RunReport]:
    reports = []
    for path in sorted(out_dir.glob("**/report.json")):
        try:
            reports.append(RunReport.from_json(path.read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            log.warning("skipping unreadable report %s: %s", path, exc)
    return reports


def render_run_directory(out_dir, points: list[TradeoffPoint] | None = None) -> list[Path]:
    """Render every figure the directory's artifacts support; returns the files
    written. A summary of the selected frontier goes alongside as delimited
    text."""
    out_dir = Path(out_dir)
    written: list[Path] = []

    if points:
        figure = out_dir / "tradeoff.png"
        selected = render_tradeoff_figure(points, figure)
        written.append(figure)
        if selected:
            selected_ids = {p.run_id for p in selected}
            summary = [p for p in points
                       if p.run_id in selected_ids and p.split in ("validation", "test")]
            summary_path = out_dir / "summary.csv"
            write_points(summary_path, summary)
            written.append(summary_path)

    for report in find_reports(out_dir):
        base = out_dir / report.run_id if report.run_id else out_dir
        base.mkdir(parents=True, exist_ok=True)
        progress = base / "progress.png"
        render_progress_figure(report, progress)
        written.append(progress)
        histogram = base / "feature_usage.png"
        render_feature_histogram(report, histogram)
        written.append(histogram)
    return written
