"""Multinomial Naive Bayes over word tokens, with Laplace smoothing.

Unseen tokens fall into one shared out-of-vocabulary bucket per class, so
the baseline is scored on the same no-OOV footing as the subword path.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .bpe import word_tokenize
from .corpus import Corpus


class BaselineError(Exception):
    pass


@dataclass
class NBModel:
    labels: list[str]
    vocabulary: dict[str, int]  # token -> feature id; the OOV bucket is implicit
    log_prior: list[float]  # per class
    log_likelihood: list[list[float]]  # per class: |V| token entries + OOV entry last
    alpha: float

    @property
    def oov_index(self) -> int:
        return len(self.vocabulary)


def fit_nb(train: Corpus, alpha: float = 1.0) -> NBModel:
    """priors = class counts / total; P(t|c) = (count(t,c) + alpha) /
    (tokens_in_c + alpha * (|V| + 1)), the +1 covering the OOV bucket."""
    if alpha <= 0:
        raise BaselineError("alpha must be positive")
    if len(train) == 0:
        raise BaselineError("empty training corpus")

    labels = list(train.labels.labels)
    vocabulary: dict[str, int] = {}
    token_counts = [Counter() for _ in labels]
    class_counts = [0] * len(labels)
    for snippet in train.snippets:
        c = train.labels.index[snippet.label]
        class_counts[c] += 1
        for token in word_tokenize(snippet.text):
            if token not in vocabulary:
                vocabulary[token] = len(vocabulary)
            token_counts[c][token] += 1

    total = sum(class_counts)
    log_prior = [math.log(n / total) for n in class_counts]
    v = len(vocabulary)
    log_likelihood = []
    for c in range(len(labels)):
        tokens_in_c = sum(token_counts[c].values())
        denom = tokens_in_c + alpha * (v + 1)
        row = [math.log((token_counts[c][t] + alpha) / denom) for t in vocabulary]
        row.append(math.log(alpha / denom))  # OOV bucket
        log_likelihood.append(row)
    return NBModel(labels, vocabulary, log_prior, log_likelihood, alpha)


def nb_log_posterior(model: NBModel, text: str) -> list[float]:
    """Unnormalized per-class log scores: log prior + sum of token log likelihoods."""
    scores = list(model.log_prior)
    oov = model.oov_index
    for token in word_tokenize(text):
        fid = model.vocabulary.get(token, oov)
        for c in range(len(scores)):
            scores[c] += model.log_likelihood[c][fid]
    return scores


def nb_posterior(model: NBModel, text: str) -> list[float]:
    """Normalized posteriors: softmax over the log scores."""
    scores = nb_log_posterior(model, text)
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


def nb_predict(model: NBModel, text: str) -> str:
    """Argmax label; exact ties resolve to the lowest class index."""
    scores = nb_log_posterior(model, text)
    best = max(range(len(scores)), key=lambda c: (scores[c], -c))
    return model.labels[best]


def save_nb(model: NBModel, path: str | Path) -> None:
    payload = {
        "alpha": model.alpha,
        "labels": model.labels,
        "vocabulary": model.vocabulary,
        "log_prior": model.log_prior,
        "log_likelihood": model.log_likelihood,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False)


def load_nb(path: str | Path) -> NBModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return NBModel(
        labels=payload["labels"],
        vocabulary=payload["vocabulary"],
        log_prior=payload["log_prior"],
        log_likelihood=payload["log_likelihood"],
        alpha=payload["alpha"],
    )
