"""Corpus ingestion, cleaning, and stratified splitting.

A corpus is a list of (text, label) snippets plus an ordered label set.
All operations are pure: they return new Corpus values and never mutate
their inputs.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class CorpusError(Exception):
    """Raised for malformed corpus files or invalid corpus operations."""


@dataclass(frozen=True)
class Snippet:
    text: str
    label: str


@dataclass(frozen=True)
class LabelSet:
    """Ordered set of language names with stable 0-based ids."""

    labels: tuple[str, ...]
    index: dict[str, int] = field(init=False, compare=False)

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise CorpusError("duplicate labels in label set")
        object.__setattr__(self, "index", {name: i for i, name in enumerate(self.labels)})

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelSet":
        # Lexicographic order: stable ids independent of file order.
        return cls(tuple(sorted(set(labels))))

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, name: str) -> bool:
        return name in self.index


@dataclass(frozen=True)
class Corpus:
    snippets: tuple[Snippet, ...]
    labels: LabelSet

    def __post_init__(self):
        for s in self.snippets:
            if s.label not in self.labels:
                raise CorpusError(f"snippet label {s.label!r} not in label set")

    def __len__(self) -> int:
        return len(self.snippets)

    @classmethod
    def from_snippets(cls, snippets: Iterable[Snippet]) -> "Corpus":
        snippets = tuple(snippets)
        return cls(snippets, LabelSet.from_labels(s.label for s in snippets))


@dataclass(frozen=True)
class CleaningPolicy:
    min_chars: int = 10
    max_chars: int = 10_000
    normalize_newlines: bool = True
    excluded_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if not (0 < self.min_chars <= self.max_chars):
            raise CorpusError("require 0 < min_chars <= max_chars")


def load_jsonl(path: str | Path) -> Corpus:
    """Load a corpus from a JSON Lines file with keys "text" and "label"."""
    snippets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"line {lineno}: expected a JSON object")
            for key in ("text", "label"):
                if key not in record:
                    raise CorpusError(f"line {lineno}: missing field {key!r}")
                if not isinstance(record[key], str):
                    raise CorpusError(f"line {lineno}: field {key!r} must be a string")
            snippets.append(Snippet(record["text"], record["label"]))
    return Corpus.from_snippets(snippets)


def save_jsonl(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus.snippets:
            fh.write(json.dumps({"text": s.text, "label": s.label}, ensure_ascii=False))
            fh.write("\n")


def _clean_text(text: str, policy: CleaningPolicy) -> str:
    if policy.normalize_newlines:
        text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = "\n".join(line.rstrip() for line in text.split("\n"))
    if len(text) > policy.max_chars:
        text = text[: policy.max_chars]
    return text


def clean_and_filter(corpus: Corpus, policy: CleaningPolicy) -> Corpus:
    """Drop excluded labels, normalize text, drop short snippets, truncate long ones."""
    excluded = set(policy.excluded_labels)
    kept = []
    for s in corpus.snippets:
        if s.label in excluded:
            continue
        text = _clean_text(s.text, policy)
        if len(text) < policy.min_chars:
            continue
        kept.append(Snippet(text, s.label))
    labels = LabelSet.from_labels(s.label for s in kept)
    return Corpus(tuple(kept), labels)


def _round_half_up(x: float) -> int:
    return int(x + 0.5) if x >= 0 else -int(-x + 0.5)


def stratified_split(
    corpus: Corpus, test_fraction: float, seed: int
) -> tuple[Corpus, Corpus]:
    """Seeded per-class split.

    Each class contributes round(n_c * test_fraction) snippets to the test
    side (round half up); the global test size is then fixed up to
    round(N * test_fraction) by moving snippets to or from the largest
    classes, one snippet per class per pass.
    """
    if not (0.0 <= test_fraction <= 1.0):
        raise CorpusError("test_fraction must lie in [0, 1]")
    by_class: dict[str, list[int]] = {name: [] for name in corpus.labels.labels}
    for i, s in enumerate(corpus.snippets):
        by_class[s.label].append(i)
    for name, idxs in by_class.items():
        if not idxs:
            raise CorpusError(f"class {name!r} has no snippets")

    test_counts = {c: _round_half_up(len(idxs) * test_fraction) for c, idxs in by_class.items()}
    target_total = _round_half_up(len(corpus) * test_fraction)
    classes_by_size = sorted(by_class, key=lambda c: (-len(by_class[c]), c))
    while sum(test_counts.values()) > target_total:
        for c in classes_by_size:
            if sum(test_counts.values()) == target_total:
                break
            if test_counts[c] > 0:
                test_counts[c] -= 1
    while sum(test_counts.values()) < target_total:
        for c in classes_by_size:
            if sum(test_counts.values()) == target_total:
                break
            if test_counts[c] < len(by_class[c]):
                test_counts[c] += 1

    rng = random.Random(seed)
    test_ids: set[int] = set()
    for c in corpus.labels.labels:
        idxs = list(by_class[c])
        rng.shuffle(idxs)
        test_ids.update(idxs[: test_counts[c]])

    train = [s for i, s in enumerate(corpus.snippets) if i not in test_ids]
    test = [s for i, s in enumerate(corpus.snippets) if i in test_ids]
    return (
        Corpus(tuple(train), corpus.labels),
        Corpus(tuple(test), corpus.labels),
    )


def class_histogram(corpus: Corpus) -> dict[str, int]:
    """Snippet count per label, in label-set order."""
    counts = Counter(s.label for s in corpus.snippets)
    return {name: counts.get(name, 0) for name in corpus.labels.labels}


def split_manifest(
    train: Corpus, test: Corpus, seed: int, test_fraction: float
) -> dict:
    """Machine-readable record of a split: seed, fraction, per-class counts."""
    return {
        "seed": seed,
        "test_fraction": test_fraction,
        "train_counts": class_histogram(train),
        "test_counts": class_histogram(test),
    }
