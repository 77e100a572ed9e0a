"""Confusion matrices, per-class precision/recall/F1, aggregates, and
confusability analysis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricsError(Exception):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [K, K]; rows = actual, columns = predicted
    labels: list[str]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.labels)
        if self.counts.shape != (k, k):
            raise MetricsError("counts must be K x K for K labels")
        if (self.counts < 0).any():
            raise MetricsError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self, c: int) -> int:
        return int(self.counts[c].sum())


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    labels: list[str]
    per_class: list[ClassMetrics]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusability: list[tuple[str, str, float]] = field(default_factory=list)
    matrix: list[list[int]] = field(default_factory=list)


def confusion(preds: list[int], golds: list[int], labels: list[str]) -> ConfusionMatrix:
    k = len(labels)
    if len(preds) != len(golds):
        raise MetricsError("preds and golds must have equal length")
    counts = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(preds, golds):
        if not (0 <= p < k and 0 <= g < k):
            raise MetricsError(f"class id out of range: pred={p} gold={g}")
        counts[g, p] += 1
    return ConfusionMatrix(counts, labels)


def per_class(matrix: ConfusionMatrix) -> list[ClassMetrics]:
    """One-vs-rest P/R/F1 per class; zero denominators yield 0."""
    out = []
    counts = matrix.counts
    for c, label in enumerate(matrix.labels):
        tp = int(counts[c, c])
        fp = int(counts[:, c].sum()) - tp
        fn = int(counts[c, :].sum()) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append(ClassMetrics(label, precision, recall, f1, matrix.support(c)))
    return out


def confusability(matrix: ConfusionMatrix, top_n: int = 5) -> list[tuple[str, str, float]]:
    """Top off-diagonal (actual, predicted, rate) triples, rate relative to
    the actual class's support; ties break by count, then label order."""
    entries = []
    counts = matrix.counts
    for a in range(len(matrix.labels)):
        row_sum = matrix.support(a)
        if row_sum == 0:
            continue
        for p in range(len(matrix.labels)):
            if a == p or counts[a, p] == 0:
                continue
            entries.append((matrix.labels[a], matrix.labels[p], counts[a, p] / row_sum, int(counts[a, p])))
    entries.sort(key=lambda e: (-e[2], -e[3], e[0], e[1]))
    return [(a, p, rate) for a, p, rate, _ in entries[:top_n]]


def aggregate(class_metrics: list[ClassMetrics], matrix: ConfusionMatrix,
              top_n_confusions: int = 5) -> EvalReport:
    """Accuracy = trace/total; macro values are unweighted class means,
    weighted values are support-weighted means."""
    total = matrix.total
    if total == 0:
        raise MetricsError("empty confusion matrix")
    accuracy = float(np.trace(matrix.counts)) / total
    k = len(class_metrics)
    macro_p = sum(m.precision for m in class_metrics) / k
    macro_r = sum(m.recall for m in class_metrics) / k
    macro_f = sum(m.f1 for m in class_metrics) / k
    weighted_p = sum(m.precision * m.support for m in class_metrics) / total
    weighted_r = sum(m.recall * m.support for m in class_metrics) / total
    weighted_f = sum(m.f1 * m.support for m in class_metrics) / total
    return EvalReport(
        labels=list(matrix.labels),
        per_class=class_metrics,
        accuracy=accuracy,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f,
        weighted_precision=weighted_p,
        weighted_recall=weighted_r,
        weighted_f1=weighted_f,
        confusability=confusability(matrix, top_n_confusions),
        matrix=matrix.counts.tolist(),
    )


def evaluate_model(predict, test) -> EvalReport:
    """Run predict(text) -> label over every test snippet and report.

    predict must cover at least the test corpus's label set; a prediction
    failure aborts with the offending snippet index.
    """
    labels = list(test.labels.labels)
    index = {name: i for i, name in enumerate(labels)}
    preds, golds = [], []
    for i, snippet in enumerate(test.snippets):
        try:
            predicted = predict(snippet.text)
        except Exception as exc:
            raise MetricsError(f"prediction failed on snippet {i}: {exc}") from exc
        if predicted not in index:
            raise MetricsError(f"snippet {i}: predicted unknown label {predicted!r}")
        preds.append(index[predicted])
        golds.append(index[snippet.label])
    matrix = confusion(preds, golds, labels)
    return aggregate(per_class(matrix), matrix)


def percent(value: float) -> str:
    """Render a [0,1] metric as a 3-decimal percentage string, e.g. 87.202."""
    return f"{value * 100:.3f}"
