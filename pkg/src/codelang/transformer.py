"""Miniature bidirectional transformer encoder with MLM and classification heads.

Pre-norm residual blocks, learned positional embeddings, GELU feed-forward,
and an MLM head tied to the token embedding. The class prediction reads the
final-layer hidden state at position 0 (the <s> token).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LAYER_NORM_EPS = 1e-5
ATTN_MASK_VALUE = -1e9
INIT_STD = 0.02


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    max_len: int = 256
    model_dim: int = 128
    num_heads: int = 4
    num_layers: int = 2
    ff_dim: int = 512
    dropout: float = 0.1
    num_classes: int = 19

    def __post_init__(self):
        if self.model_dim % self.num_heads != 0:
            raise ModelError("model_dim must be divisible by num_heads")
        if min(self.vocab_size, self.max_len, self.num_layers, self.ff_dim, self.num_classes) < 1:
            raise ModelError("config dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")


@dataclass
class TokenBatch:
    """Padded token ids with an attention mask; pad positions carry 0 in the mask."""

    ids: np.ndarray  # [B, T] int
    mask: np.ndarray  # [B, T] 1 = real token, 0 = pad
    labels: np.ndarray | None = None  # [B] int


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape table for every learnable tensor."""
    d, ff = config.model_dim, config.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.max_len, d),
    }
    for i in range(config.num_layers):
        p = f"layer{i}"
        shapes[f"{p}.ln1.gain"] = (d,)
        shapes[f"{p}.ln1.bias"] = (d,)
        for proj in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.{proj}.weight"] = (d, d)
            shapes[f"{p}.attn.{proj}.bias"] = (d,)
        shapes[f"{p}.ln2.gain"] = (d,)
        shapes[f"{p}.ln2.bias"] = (d,)
        shapes[f"{p}.ff.w1.weight"] = (d, ff)
        shapes[f"{p}.ff.w1.bias"] = (ff,)
        shapes[f"{p}.ff.w2.weight"] = (ff, d)
        shapes[f"{p}.ff.w2.bias"] = (d,)
    shapes["ln_final.gain"] = (d,)
    shapes["ln_final.bias"] = (d,)
    shapes["classifier.weight"] = (d, config.num_classes)
    shapes["classifier.bias"] = (config.num_classes,)
    return shapes


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict[str, Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def astype(self, mode: str) -> "EncoderParams":
        """Copy of the parameters under the given precision mode."""
        with ad.precision(mode):
            tensors = {
                name: Tensor(t.data.copy(), requires_grad=True, name=name)
                for name, t in self.tensors.items()
            }
        return EncoderParams(self.config, tensors)


def init_params(config: EncoderConfig, seed: int) -> EncoderParams:
    """Weights ~ Normal(0, 0.02) from the seeded generator; biases 0; gains 1."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "bias":
            data = np.zeros(shape)
        elif leaf == "gain":
            data = np.ones(shape)
        else:
            data = rng.normal(0.0, INIT_STD, size=shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return EncoderParams(config, tensors)


def _attention(params: EncoderParams, prefix: str, x: Tensor, add_mask: np.ndarray,
               rng, training: bool) -> Tensor:
    cfg = params.config
    b, t, d = x.shape
    h = cfg.num_heads
    dh = d // h
    heads = {}
    for proj in ("q", "k", "v"):
        y = ad.matmul(x, params[f"{prefix}.attn.{proj}.weight"]) + params[f"{prefix}.attn.{proj}.bias"]
        y = ad.reshape(y, (b, t, h, dh))
        heads[proj] = ad.transpose(y, (0, 2, 1, 3))  # [B, h, T, dh]
    scores = ad.matmul(heads["q"], ad.transpose(heads["k"], (0, 1, 3, 2)))
    scores = scores * (1.0 / np.sqrt(dh))
    scores = scores + Tensor(add_mask)  # pad columns pushed to -inf before softmax
    weights = ad.softmax(scores, axis=-1)
    weights = ad.dropout(weights, cfg.dropout, rng, training)
    ctx = ad.matmul(weights, heads["v"])  # [B, h, T, dh]
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
    return ad.matmul(ctx, params[f"{prefix}.attn.o.weight"]) + params[f"{prefix}.attn.o.bias"]


def encoder_forward(params: EncoderParams, batch: TokenBatch,
                    training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Hidden states [B, T, d] from the pre-norm encoder stack."""
    cfg = params.config
    ids = np.asarray(batch.ids)
    if ids.ndim != 2:
        raise ModelError("batch ids must be [B, T]")
    b, t = ids.shape
    if t > cfg.max_len:
        raise ModelError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ModelError("token id out of range")
    if training and rng is None:
        raise ModelError("training mode requires an rng for dropout")

    mask = np.asarray(batch.mask)
    add_mask = ((1.0 - mask[:, None, None, :]) * ATTN_MASK_VALUE).astype(ad.current_dtype())

    x = ad.embedding(params["tok_emb"], ids) + params["pos_emb"][:t]
    x = ad.dropout(x, cfg.dropout, rng, training)
    for i in range(cfg.num_layers):
        p = f"layer{i}"
        normed = ad.layer_norm(x, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"], LAYER_NORM_EPS)
        x = x + ad.dropout(_attention(params, p, normed, add_mask, rng, training),
                           cfg.dropout, rng, training)
        normed = ad.layer_norm(x, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"], LAYER_NORM_EPS)
        ff = ad.matmul(normed, params[f"{p}.ff.w1.weight"]) + params[f"{p}.ff.w1.bias"]
        ff = ad.gelu(ff)
        ff = ad.matmul(ff, params[f"{p}.ff.w2.weight"]) + params[f"{p}.ff.w2.bias"]
        x = x + ad.dropout(ff, cfg.dropout, rng, training)
    return ad.layer_norm(x, params["ln_final.gain"], params["ln_final.bias"], LAYER_NORM_EPS)


def mlm_logits(params: EncoderParams, hidden: Tensor) -> Tensor:
    """Per-position vocabulary logits; head weights tied to the token embedding."""
    emb_t = ad.transpose(params["tok_emb"], (1, 0))
    return ad.matmul(hidden, emb_t)


def classify(params: EncoderParams, batch: TokenBatch, bos_id: int | None = None,
             hidden: Tensor | None = None) -> Tensor:
    """Class logits [B, K] from the position-0 hidden state of the last layer."""
    ids = np.asarray(batch.ids)
    if bos_id is not None and not (ids[:, 0] == bos_id).all():
        raise ModelError("every row must begin with the <s> token")
    if hidden is None:
        hidden = encoder_forward(params, batch)
    pooled = hidden[:, 0, :]
    return ad.matmul(pooled, params["classifier.weight"]) + params["classifier.bias"]


def predict_classes(logits: np.ndarray) -> np.ndarray:
    """Argmax per row; exact ties resolve to the lowest class index."""
    return np.asarray(logits).argmax(axis=-1)


def save_params(params: EncoderParams, directory: str | Path) -> None:
    """Manifest (ordered names, shapes, dtype) + one little-endian float32 blob."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dtype": "float32",
        "tensors": [
            {"name": name, "shape": list(t.data.shape)}
            for name, t in params.tensors.items()
        ],
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with open(directory / "config.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(params.config), fh, indent=2, sort_keys=True)
    blob = np.concatenate([
        t.data.astype("<f4").reshape(-1) for t in params.tensors.values()
    ])
    blob.tofile(directory / "params.bin")


def load_params(directory: str | Path) -> EncoderParams:
    directory = Path(directory)
    with open(directory / "config.json", encoding="utf-8") as fh:
        config = EncoderConfig(**json.load(fh))
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    blob = np.fromfile(directory / "params.bin", dtype="<f4")
    tensors: dict[str, Tensor] = {}
    offset = 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        data = blob[offset : offset + size].reshape(shape)
        offset += size
        tensors[entry["name"]] = Tensor(data, requires_grad=True, name=entry["name"])
    if offset != blob.size:
        raise ModelError("parameter blob size does not match manifest")
    expected = set(parameter_shapes(config))
    if set(tensors) != expected:
        raise ModelError("manifest tensor names do not match config")
    return EncoderParams(config, tensors)
