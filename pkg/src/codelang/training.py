"""MLM masking, AdamW with decay partitioning, LR schedule, and training loops."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .bpe import BpeModel, bpe_encode
from .corpus import Corpus
from .transformer import (
    EncoderConfig,
    EncoderParams,
    TokenBatch,
    classify,
    encoder_forward,
    init_params,
    mlm_logits,
    predict_classes,
)

IGNORE_INDEX = -100


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class MaskingPolicy:
    mask_prob: float = 0.15
    replace_mask: float = 0.8
    replace_random: float = 0.1
    keep: float = 0.1

    def __post_init__(self):
        probs = (self.mask_prob, self.replace_mask, self.replace_random, self.keep)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise TrainingError("masking probabilities must lie in [0, 1]")
        if abs(self.replace_mask + self.replace_random + self.keep - 1.0) > 1e-9:
            raise TrainingError("replace_mask + replace_random + keep must equal 1")


@dataclass(frozen=True)
class OptimizerHyper:
    lr_peak: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int = 100
    total_steps: int = 1000
    freeze_no_decay: bool = False

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise TrainingError("betas must lie in (0, 1)")
        if self.eps <= 0.0:
            raise TrainingError("eps must be positive")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise TrainingError("require 0 <= warmup_steps <= total_steps")


@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: EncoderParams) -> "OptState":
        return cls(
            m={k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.tensors.items()},
            v={k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.tensors.items()},
        )


@dataclass
class TrainHistory:
    steps: list[int] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    step_seconds: list[float] = field(default_factory=list)
    epoch_accuracy: list[float] = field(default_factory=list)

    def record(self, step: int, lr: float, loss: float, seconds: float) -> None:
        self.steps.append(step)
        self.lrs.append(lr)
        self.losses.append(loss)
        self.step_seconds.append(seconds)

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "lr", "loss"])
            for step, lr, loss in zip(self.steps, self.lrs, self.losses):
                writer.writerow([step, f"{lr:.10g}", f"{loss:.10g}"])


def partition_params(params: EncoderParams) -> tuple[set[str], set[str]]:
    """(decay, no_decay) tensor names: biases and layer-norm gains are
    exempt from weight decay; everything else decays."""
    decay, no_decay = set(), set()
    for name in params.tensors:
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("bias", "gain"):
            no_decay.add(name)
        else:
            decay.add(name)
    return decay, no_decay


def lr_at(step: int, hyper: OptimizerHyper) -> float:
    """Linear warmup to lr_peak, then linear decay to 0 at total_steps."""
    if not 0 <= step <= hyper.total_steps:
        raise TrainingError("step out of schedule range")
    if hyper.warmup_steps > 0 and step <= hyper.warmup_steps:
        return hyper.lr_peak * step / hyper.warmup_steps
    if hyper.total_steps == hyper.warmup_steps:
        return hyper.lr_peak
    return hyper.lr_peak * (hyper.total_steps - step) / (hyper.total_steps - hyper.warmup_steps)


def adamw_step(
    params: EncoderParams,
    grads: dict[str, np.ndarray],
    state: OptState,
    hyper: OptimizerHyper,
    lr: float,
    decay_set: set[str] | None = None,
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta,
    with the decay term applied only to tensors in decay_set.
    """
    if lr < 0:
        raise TrainingError("lr must be non-negative")
    if decay_set is None:
        decay_set = partition_params(params)[0]
    no_decay = set(params.tensors) - decay_set
    state.t += 1
    t = state.t
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    for name, tensor in params.tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for {name}")
        if hyper.freeze_no_decay and name in no_decay:
            continue
        m = state.m[name]
        v = state.v[name]
        g64 = g.astype(np.float64)
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g64
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g64 * g64
        m_hat = m / bc1
        v_hat = v / bc2
        update = lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        if hyper.weight_decay and name in decay_set:
            update = update + lr * hyper.weight_decay * tensor.data.astype(np.float64)
        tensor.data = (tensor.data.astype(np.float64) - update).astype(tensor.data.dtype)


def mask_for_mlm(
    batch: TokenBatch,
    policy: MaskingPolicy,
    model: BpeModel,
    rng: np.random.Generator,
) -> tuple[TokenBatch, np.ndarray]:
    """Select non-special positions independently with mask_prob; selected
    positions become <mask> / a random non-special token / stay unchanged
    per the policy. Targets hold original ids at selected positions and
    IGNORE_INDEX elsewhere."""
    ids = np.asarray(batch.ids).copy()
    special_ids = np.array(sorted(model.specials.values()))
    protected = np.isin(ids, special_ids) | (np.asarray(batch.mask) == 0)

    selected = (rng.random(ids.shape) < policy.mask_prob) & ~protected
    targets = np.full(ids.shape, IGNORE_INDEX, dtype=np.int64)
    targets[selected] = ids[selected]

    action = rng.random(ids.shape)
    mask_id = model.specials["<mask>"]
    use_mask = selected & (action < policy.replace_mask)
    use_random = selected & ~use_mask & (action < policy.replace_mask + policy.replace_random)

    non_special = np.setdiff1d(np.arange(model.size), special_ids)
    random_ids = non_special[rng.integers(0, len(non_special), size=ids.shape)]
    ids[use_mask] = mask_id
    ids[use_random] = random_ids[use_random]
    return TokenBatch(ids=ids, mask=np.asarray(batch.mask), labels=batch.labels), targets


def encode_snippet(model: BpeModel, text: str, max_len: int) -> list[int]:
    """<s> + body (truncated) + </s>."""
    body = bpe_encode(model, text, max_len=max_len - 2)
    return [model.specials["<s>"]] + body + [model.specials["</s>"]]


def encode_corpus(corpus: Corpus, model: BpeModel, max_len: int) -> tuple[list[list[int]], np.ndarray]:
    encoded = [encode_snippet(model, s.text, max_len) for s in corpus.snippets]
    labels = np.array([corpus.labels.index[s.label] for s in corpus.snippets])
    return encoded, labels


def batches_from_encoded(
    encoded: list[list[int]],
    labels: np.ndarray,
    pad_id: int,
    batch_size: int,
    rng: np.random.Generator | None = None,
) -> list[TokenBatch]:
    """Shuffle snippet order (when an rng is given) and pad each batch to
    its longest row."""
    order = np.arange(len(encoded))
    if rng is not None:
        rng.shuffle(order)
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        rows = [encoded[i] for i in idx]
        width = max(len(r) for r in rows)
        ids = np.full((len(rows), width), pad_id, dtype=np.int64)
        mask = np.zeros((len(rows), width), dtype=np.int64)
        for j, row in enumerate(rows):
            ids[j, : len(row)] = row
            mask[j, : len(row)] = 1
        batches.append(TokenBatch(ids=ids, mask=mask, labels=labels[idx]))
    return batches


def make_batches(
    corpus: Corpus,
    model: BpeModel,
    max_len: int,
    batch_size: int,
    rng: np.random.Generator,
    shuffle: bool = True,
) -> list[TokenBatch]:
    encoded, labels = encode_corpus(corpus, model, max_len)
    return batches_from_encoded(
        encoded, labels, model.specials["<pad>"], batch_size, rng if shuffle else None
    )


def mlm_loss(params: EncoderParams, batch: TokenBatch, targets: np.ndarray,
             training: bool = False, rng: np.random.Generator | None = None):
    hidden = encoder_forward(params, batch, training=training, rng=rng)
    logits = mlm_logits(params, hidden)
    flat_logits = ad.reshape(logits, (-1, params.config.vocab_size))
    flat_targets = targets.reshape(-1)
    mask = flat_targets != IGNORE_INDEX
    safe_targets = np.where(mask, flat_targets, 0)
    return ad.cross_entropy(flat_logits, safe_targets, mask=mask)


def pretrain_mlm(
    corpus: Corpus,
    model: BpeModel,
    config: EncoderConfig,
    hyper: OptimizerHyper,
    policy: MaskingPolicy,
    seed: int,
    batch_size: int = 32,
    params: EncoderParams | None = None,
) -> tuple[EncoderParams, TrainHistory]:
    """Masked-LM training over shuffled batches for hyper.total_steps steps."""
    if config.vocab_size != model.size:
        raise TrainingError("tokenizer and config vocab sizes disagree")
    rng = np.random.default_rng(seed)
    if params is None:
        params = init_params(config, seed)
    state = OptState.fresh(params)
    decay_set = partition_params(params)[0]
    history = TrainHistory()

    encoded, labels = encode_corpus(corpus, model, config.max_len)
    pad = model.specials["<pad>"]
    step = 0
    while step < hyper.total_steps:
        for batch in batches_from_encoded(encoded, labels, pad, batch_size, rng):
            if step >= hyper.total_steps:
                break
            masked, targets = mask_for_mlm(batch, policy, model, rng)
            if (targets != IGNORE_INDEX).sum() == 0:
                continue  # nothing selected: zero gradient, skip
            started = time.perf_counter()
            params.zero_grad()
            loss = mlm_loss(params, masked, targets, training=True, rng=rng)
            loss.backward()
            grads = {k: t.grad for k, t in params.tensors.items() if t.grad is not None}
            step += 1
            lr = lr_at(step, hyper)
            adamw_step(params, grads, state, hyper, lr, decay_set)
            history.record(step, lr, float(loss.data), time.perf_counter() - started)
    return params, history


def finetune(
    train: Corpus,
    model: BpeModel,
    params: EncoderParams,
    hyper: OptimizerHyper,
    seed: int,
    batch_size: int = 32,
) -> tuple[EncoderParams, TrainHistory]:
    """Minimize classification cross-entropy over shuffled batches;
    all parameters trainable."""
    if params.config.vocab_size != model.size:
        raise TrainingError("tokenizer and params vocab sizes disagree")
    if len(train.labels) > params.config.num_classes:
        raise TrainingError("more labels than classifier classes")
    rng = np.random.default_rng(seed)
    state = OptState.fresh(params)
    decay_set = partition_params(params)[0]
    history = TrainHistory()
    bos = model.specials["<s>"]

    encoded, labels = encode_corpus(train, model, params.config.max_len)
    pad = model.specials["<pad>"]
    step = 0
    while step < hyper.total_steps:
        for batch in batches_from_encoded(encoded, labels, pad, batch_size, rng):
            if step >= hyper.total_steps:
                break
            started = time.perf_counter()
            params.zero_grad()
            hidden = encoder_forward(params, batch, training=True, rng=rng)
            logits = classify(params, batch, bos_id=bos, hidden=hidden)
            loss = ad.cross_entropy(logits, batch.labels)
            loss.backward()
            grads = {k: t.grad for k, t in params.tensors.items() if t.grad is not None}
            step += 1
            lr = lr_at(step, hyper)
            adamw_step(params, grads, state, hyper, lr, decay_set)
            history.record(step, lr, float(loss.data), time.perf_counter() - started)
    return params, history


def predict_labels(
    params: EncoderParams,
    model: BpeModel,
    texts: list[str],
    label_names: list[str],
    batch_size: int = 32,
) -> list[str]:
    """Evaluation-mode class prediction for raw snippet texts."""
    pad = model.specials["<pad>"]
    out: list[str] = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start : start + batch_size]
        rows = [encode_snippet(model, t, params.config.max_len) for t in chunk]
        width = max(len(r) for r in rows)
        ids = np.full((len(rows), width), pad, dtype=np.int64)
        mask = np.zeros((len(rows), width), dtype=np.int64)
        for j, row in enumerate(rows):
            ids[j, : len(row)] = row
            mask[j, : len(row)] = 1
        batch = TokenBatch(ids=ids, mask=mask)
        logits = classify(params, batch, bos_id=model.specials["<s>"])
        for k in predict_classes(logits.data):
            out.append(label_names[int(k)])
    return out
