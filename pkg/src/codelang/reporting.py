"""Report rendering: JSON, plain-text tables, and matplotlib figures."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport, percent


def report_to_json(report: EvalReport) -> str:
    """Full unrounded numbers, stable key order."""
    payload = asdict(report)
    payload["confusability"] = [
        {"actual": a, "predicted": p, "rate": r} for a, p, r in report.confusability
    ]
    return json.dumps(payload, indent=2, sort_keys=True)


def report_to_table(report: EvalReport) -> str:
    """Per-class table (Precision, Recall, F1, Support) plus an aggregate
    line with 3-decimal percentages."""
    width = max(len(m.label) for m in report.per_class)
    lines = [f"{'':{width}}  Precision  Recall  F1      Support"]
    for m in report.per_class:
        lines.append(
            f"{m.label:{width}}  {m.precision:9.2f}  {m.recall:6.2f}  {m.f1:6.2f}  {m.support:7d}"
        )
    lines.append("")
    lines.append(
        "Accuracy(%) {}  Precision(%) {}  Recall(%) {}  F1(%) {}".format(
            percent(report.accuracy),
            percent(report.macro_precision),
            percent(report.macro_recall),
            percent(report.macro_f1),
        )
    )
    if report.confusability:
        lines.append("")
        lines.append("Top confusions (actual -> predicted, share of actual class):")
        for a, p, r in report.confusability:
            lines.append(f"  {a} -> {p}: {r * 100:.1f}%")
    return "\n".join(lines) + "\n"


def save_report(report: EvalReport, directory: str | Path, stem: str = "eval",
                figures: bool = True) -> list[Path]:
    """Write <stem>.json and <stem>.txt, and render figures alongside them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    json_path = directory / f"{stem}.json"
    json_path.write_text(report_to_json(report), encoding="utf-8")
    written.append(json_path)
    txt_path = directory / f"{stem}.txt"
    txt_path.write_text(report_to_table(report), encoding="utf-8")
    written.append(txt_path)
    if figures:
        written.append(save_confusion_figure(report, directory / f"{stem}_confusion.png"))
        written.append(save_per_class_figure(report, directory / f"{stem}_per_class.png"))
    return written


def save_confusion_figure(report: EvalReport, path: str | Path) -> Path:
    """Row-normalized confusion-matrix heatmap."""
    path = Path(path)
    counts = np.asarray(report.matrix, dtype=float)
    row_sums = counts.sum(axis=1, keepdims=True)
    rates = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)
    k = len(report.labels)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * k + 2), max(3.5, 0.5 * k + 1.5)))
    im = ax.imshow(rates, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(k), report.labels, rotation=45, ha="right")
    ax.set_yticks(range(k), report.labels)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("Actual")
    ax.set_title("Confusion matrix (row-normalized)")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_per_class_figure(report: EvalReport, path: str | Path) -> Path:
    """Grouped bar chart of per-class precision, recall, and F1."""
    path = Path(path)
    k = len(report.per_class)
    x = np.arange(k)
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(5.0, 0.7 * k + 2), 4.0))
    ax.bar(x - width, [m.precision for m in report.per_class], width, label="Precision")
    ax.bar(x, [m.recall for m in report.per_class], width, label="Recall")
    ax.bar(x + width, [m.f1 for m in report.per_class], width, label="F1")
    ax.set_xticks(x, [m.label for m in report.per_class], rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Score")
    ax.set_title("Per-class metrics")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_history_figure(steps: list[int], losses: list[float], path: str | Path,
                        title: str = "Training loss") -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=1)
    ax.set_xlabel("Step")
    ax.set_ylabel("Loss")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
