"""Rendering of evaluation results, corpus statistics, and training
histories as key/value text, JSON, TSV, and PNG figures.

Text, JSON, and TSV artifacts are byte-deterministic: rerunning with the
same inputs reproduces them exactly (no timestamps, sorted keys, fixed
float formatting).  Figures are rendered with the non-interactive Agg
backend so reports work on headless machines.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .data import CorpusStats
from .evaluation import EvalReport
from .training import RunHistory

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# evaluation reports


def eval_payload(report: EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "n_examples": report.n_examples,
        "n_correct": report.n_correct,
        "matched_boundaries": report.matched_boundaries,
        "predicted_boundaries": report.predicted_boundaries,
        "reference_boundaries": report.reference_boundaries,
    }


def format_eval_text(report: EvalReport) -> str:
    lines = []
    payload = eval_payload(report)
    for key in (
        "n_examples",
        "n_correct",
        "matched_boundaries",
        "predicted_boundaries",
        "reference_boundaries",
    ):
        lines.append(f"{key} = {payload[key]}")
    for key in METRIC_NAMES:
        lines.append(f"{key} = {_fmt(payload[key])}")
    return "\n".join(lines) + "\n"


def predictions_tsv(report: EvalReport) -> str:
    lines = ["source\treference\tprediction\tcorrect"]
    for rec in report.examples:
        flag = "1" if rec.correct else "0"
        lines.append(f"{rec.source}\t{rec.reference}\t{rec.prediction}\t{flag}")
    return "\n".join(lines) + "\n"


def plot_eval_metrics(report: EvalReport, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    values = [getattr(report, m) for m in METRIC_NAMES]
    bars = ax.bar(METRIC_NAMES, values, color="#4878a8")
    for bar, v in zip(bars, values):
        ax.text(
            bar.get_x() + bar.get_width() / 2, v + 0.01, _fmt(v),
            ha="center", va="bottom", fontsize=8,
        )
    ax.set_ylim(0.0, 1.1)
    ax.set_ylabel("score")
    ax.set_title(f"segmentation quality over {report.n_examples} words")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_eval_report(
    out_dir, report: EvalReport, name: str = "eval", figures: bool = True
) -> list[str]:
    """Write {name}.txt, {name}.json, {name}_predictions.tsv and (optionally)
    {name}_metrics.png; returns the file names written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _write_text(out / f"{name}.txt", format_eval_text(report))
    written.append(f"{name}.txt")
    _write_json(out / f"{name}.json", eval_payload(report))
    written.append(f"{name}.json")
    _write_text(out / f"{name}_predictions.tsv", predictions_tsv(report))
    written.append(f"{name}_predictions.tsv")
    if figures:
        plot_eval_metrics(report, out / f"{name}_metrics.png")
        written.append(f"{name}_metrics.png")
    return written


# ---------------------------------------------------------------------------
# corpus statistics


def stats_payload(stats: CorpusStats) -> dict:
    return {
        "n_words": stats.n_words,
        "n_unique_words": stats.n_unique_words,
        "alphabet_size": stats.alphabet_size,
        "morphs_per_word": stats.morphs_per_word,
        "seg_points_per_word": stats.seg_points_per_word,
        "max_morphs": stats.max_morphs,
        "n_unique_morphs": stats.n_unique_morphs,
        "top_morphs": [[m, c] for m, c in stats.top_morphs],
    }


def format_stats_text(stats: CorpusStats) -> str:
    lines = [
        f"words = {stats.n_words}",
        f"unique_words = {stats.n_unique_words}",
        f"alphabet_size = {stats.alphabet_size}",
        f"morphs_per_word = {stats.morphs_per_word:.3f}",
        f"seg_points_per_word = {stats.seg_points_per_word:.3f}",
        f"max_morphs_per_word = {stats.max_morphs}",
        f"unique_morphs = {stats.n_unique_morphs}",
        "top_morphs:",
    ]
    width = max((len(m) for m, _ in stats.top_morphs), default=5)
    for rank, (morph, count) in enumerate(stats.top_morphs, start=1):
        lines.append(f"  {rank:>2}  {morph:<{width}}  {count}")
    return "\n".join(lines) + "\n"


def plot_top_morphs(stats: CorpusStats, path: Path) -> None:
    morphs = [m for m, _ in stats.top_morphs]
    counts = [c for _, c in stats.top_morphs]
    fig, ax = plt.subplots(figsize=(5.0, 0.5 + 0.35 * max(len(morphs), 1)))
    ypos = range(len(morphs))[::-1]
    ax.barh(list(ypos), counts, color="#4878a8")
    ax.set_yticks(list(ypos))
    ax.set_yticklabels(morphs)
    ax.set_xlabel("occurrences")
    ax.set_title("most frequent morphs")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_stats_report(
    out_dir, stats: CorpusStats, name: str = "stats", figures: bool = True
) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _write_text(out / f"{name}.txt", format_stats_text(stats))
    written.append(f"{name}.txt")
    _write_json(out / f"{name}.json", stats_payload(stats))
    written.append(f"{name}.json")
    if figures:
        plot_top_morphs(stats, out / f"{name}_top_morphs.png")
        written.append(f"{name}_top_morphs.png")
    return written


# ---------------------------------------------------------------------------
# training histories


def history_payload(history: RunHistory) -> dict:
    mean_dev, std_dev = history.dev_summary()
    replicates = []
    for rep in history.replicates:
        entry = {
            "seed": rep.seed,
            "eval_points": [[e, a] for e, a in rep.eval_points],
            "selected_epoch": rep.selected_epoch,
            "selected_dev_accuracy": rep.selected_dev_accuracy,
        }
        if rep.test_reports is not None:
            entry["test"] = {
                key: eval_payload(r) for key, r in rep.test_reports.items()
            }
        replicates.append(entry)
    payload = {
        "replicates": replicates,
        "dev_accuracy_mean": mean_dev,
        "dev_accuracy_std": std_dev,
    }
    test_summary = history.test_summary()
    if test_summary:
        payload["test_summary"] = {
            key: {m: {"mean": mv, "std": sv} for m, (mv, sv) in metrics.items()}
            for key, metrics in test_summary.items()
        }
    return payload


def format_history_text(history: RunHistory) -> str:
    mean_dev, std_dev = history.dev_summary()
    lines = [f"replicates = {len(history.replicates)}"]
    for rep in history.replicates:
        lines.append(
            f"seed {rep.seed}: selected epoch {rep.selected_epoch}, "
            f"dev accuracy {_fmt(rep.selected_dev_accuracy)}"
        )
    lines.append(f"dev_accuracy_mean = {_fmt(mean_dev)}")
    lines.append(f"dev_accuracy_std = {_fmt(std_dev)}")
    for key, metrics in history.test_summary().items():
        label = key if key else "test"
        for metric in METRIC_NAMES:
            mv, sv = metrics[metric]
            lines.append(f"{label}.{metric} = {_fmt(mv)} (std {_fmt(sv)})")
    return "\n".join(lines) + "\n"


def history_tsv(history: RunHistory) -> str:
    lines = ["seed\tepoch\tdev_accuracy\tselected"]
    for rep in history.replicates:
        for epoch, acc in rep.eval_points:
            flag = "1" if epoch == rep.selected_epoch else "0"
            lines.append(f"{rep.seed}\t{epoch}\t{acc!r}\t{flag}")
    return "\n".join(lines) + "\n"


def plot_history(history: RunHistory, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    for rep in history.replicates:
        epochs = [e for e, _ in rep.eval_points]
        accs = [a for _, a in rep.eval_points]
        ax.plot(epochs, accs, marker="o", markersize=3, label=f"seed {rep.seed}")
        ax.plot(
            [rep.selected_epoch], [rep.selected_dev_accuracy],
            marker="*", markersize=10, color="black", zorder=5,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("dev accuracy")
    ax.set_ylim(-0.02, 1.05)
    ax.set_title("model selection (starred = kept checkpoint)")
    if len(history.replicates) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_history_report(
    out_dir, history: RunHistory, name: str = "history", figures: bool = True
) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _write_text(out / f"{name}.txt", format_history_text(history))
    written.append(f"{name}.txt")
    _write_json(out / f"{name}.json", history_payload(history))
    written.append(f"{name}.json")
    _write_text(out / f"{name}.tsv", history_tsv(history))
    written.append(f"{name}.tsv")
    if figures:
        plot_history(history, out / f"{name}_curves.png")
        written.append(f"{name}_curves.png")
    return written


# ---------------------------------------------------------------------------
# run manifest


def write_manifest(out_dir, command: str, config: Mapping, files: Sequence[str]) -> None:
    """Record what a run produced and the configuration that produced it.
    Deliberately contains no timestamps so identical runs write identical
    manifests."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config": dict(config),
        "files": sorted(set(files) | {"manifest.json"}),
    }
    _write_json(out / "manifest.json", payload)
