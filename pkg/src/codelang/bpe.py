"""Byte-level BPE training, encoding, decoding, and word tokenization.

The tokenizer starts from a 256-symbol printable byte alphabet, so any
input is representable and no unknown token can ever be produced. The
space byte maps to the printable marker symbol (Ġ); merges never place
that marker anywhere but at the start of a token, so a subword that
follows a space always carries the marker as a prefix.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path


class BpeError(Exception):
    pass


def _bytes_to_unicode() -> dict[int, str]:
    """Injective byte -> printable unicode symbol map (256 entries)."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


BYTE_TO_SYMBOL = _bytes_to_unicode()
SYMBOL_TO_BYTE = {s: b for b, s in BYTE_TO_SYMBOL.items()}
SPACE_MARKER = BYTE_TO_SYMBOL[ord(" ")]  # "Ġ"

DEFAULT_SPECIALS = ("<s>", "</s>", "<pad>", "<mask>")


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    vocab: dict[str, int]
    specials: dict[str, int]
    inv_vocab: dict[int, str] = field(init=False, repr=False)
    merge_ranks: dict[tuple[str, str], int] = field(init=False, repr=False)

    def __post_init__(self):
        if sorted(self.vocab.values()) != list(range(len(self.vocab))):
            raise BpeError("vocab ids must be dense 0..V-1")
        for left, right in self.merges:
            if left + right not in self.vocab:
                raise BpeError(f"merge output {left + right!r} missing from vocab")
        self.inv_vocab = {i: t for t, i in self.vocab.items()}
        self.merge_ranks = {pair: rank for rank, pair in enumerate(self.merges)}

    @property
    def size(self) -> int:
        return len(self.vocab)

    def special_id(self, name: str) -> int:
        return self.specials[name]


def _text_to_symbols(text: str) -> list[str]:
    return [BYTE_TO_SYMBOL[b] for b in text.encode("utf-8")]


def _split_chunks(symbols: list[str]) -> list[tuple[str, ...]]:
    """Split a symbol stream so every chunk after the first starts at a
    space marker. Merges then stay within chunks, which keeps the marker
    a strict token prefix."""
    chunks = []
    start = 0
    for i, sym in enumerate(symbols):
        if sym == SPACE_MARKER and i > start:
            chunks.append(tuple(symbols[start:i]))
            start = i
    if start < len(symbols):
        chunks.append(tuple(symbols[start:]))
    return chunks


def train_bpe(
    texts: list[str],
    vocab_size: int,
    specials: tuple[str, ...] = DEFAULT_SPECIALS,
) -> BpeModel:
    """Learn a merge list by greedy most-frequent-pair merging.

    Ties on count break toward the lexicographically smallest (left, right)
    pair; training stops when the vocab is full or no pair occurs twice.
    """
    min_size = 256 + len(specials)
    if vocab_size < min_size:
        raise BpeError(f"vocab_size must be >= {min_size}")
    for name in specials:
        if len(name) < 2:
            raise BpeError("special token names must have length >= 2")

    vocab: dict[str, int] = {name: i for i, name in enumerate(specials)}
    for b in range(256):
        vocab[BYTE_TO_SYMBOL[b]] = len(vocab)

    # Chunk frequency table; merging rewrites chunks in place.
    chunk_freq: Counter[tuple[str, ...]] = Counter()
    for text in texts:
        chunk_freq.update(_split_chunks(_text_to_symbols(text)))

    pair_counts: Counter[tuple[str, str]] = Counter()
    pair_chunks: dict[tuple[str, str], set[tuple[str, ...]]] = {}
    for chunk, freq in chunk_freq.items():
        for pair in zip(chunk, chunk[1:]):
            pair_counts[pair] += freq
            pair_chunks.setdefault(pair, set()).add(chunk)

    special_set = set(specials)
    merges: list[tuple[str, str]] = []
    while len(vocab) < vocab_size:
        best = None
        best_count = 1
        for pair, count in pair_counts.items():
            if count < 2 or pair[0] + pair[1] in special_set:
                continue
            if count > best_count or (count == best_count and (best is None or pair < best)):
                best = pair
                best_count = count
        if best is None:
            break

        merged = best[0] + best[1]
        affected = pair_chunks.get(best, set())
        for chunk in list(affected):
            freq = chunk_freq.pop(chunk)
            for pair in zip(chunk, chunk[1:]):
                pair_counts[pair] -= freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                group = pair_chunks.get(pair)
                if group is not None:
                    group.discard(chunk)
            new_chunk = tuple(_merge_pair(list(chunk), best, merged))
            chunk_freq[new_chunk] += freq
            for pair in zip(new_chunk, new_chunk[1:]):
                pair_counts[pair] += freq
                pair_chunks.setdefault(pair, set()).add(new_chunk)

        merges.append(best)
        vocab[merged] = len(vocab)

    return BpeModel(merges=merges, vocab=vocab, specials={name: vocab[name] for name in specials})


def _merge_pair(symbols: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _encode_chunk(model: BpeModel, chunk: tuple[str, ...]) -> list[str]:
    symbols = list(chunk)
    ranks = model.merge_ranks
    while len(symbols) > 1:
        best_rank = None
        best_pair = None
        for pair in zip(symbols, symbols[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best_pair = pair
        if best_pair is None:
            break
        symbols = _merge_pair(symbols, best_pair, best_pair[0] + best_pair[1])
    return symbols


def bpe_tokens(model: BpeModel, text: str) -> list[str]:
    """Token strings for text, applying merges in rank order to a fixpoint."""
    tokens = []
    for chunk in _split_chunks(_text_to_symbols(text)):
        tokens.extend(_encode_chunk(model, chunk))
    return tokens


def bpe_encode(model: BpeModel, text: str, max_len: int | None = None) -> list[int]:
    """Token ids for text; total for any input, truncated to max_len."""
    ids = [model.vocab[t] for t in bpe_tokens(model, text)]
    if max_len is not None:
        ids = ids[:max_len]
    return ids


def bpe_decode(model: BpeModel, ids: list[int]) -> str:
    """Inverse of bpe_encode on non-truncated input; special ids decode to nothing."""
    special_ids = set(model.specials.values())
    data = bytearray()
    for i in ids:
        if i not in model.inv_vocab:
            raise BpeError(f"token id {i} out of range (vocab size {model.size})")
        if i in special_ids:
            continue
        for ch in model.inv_vocab[i]:
            data.append(SYMBOL_TO_BYTE[ch])
    return data.decode("utf-8", errors="replace")


_WORD_RE = re.compile(r"[A-Za-z0-9_]+|\n|[^\sA-Za-z0-9_]")


def word_tokenize(text: str) -> list[str]:
    """Rule-based tokenization for the classical baseline: identifier runs,
    single punctuation characters, and newlines; other whitespace separates."""
    return _WORD_RE.findall(text)


def save_bpe(model: BpeModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "merges.txt", "w", encoding="utf-8") as fh:
        for left, right in model.merges:
            fh.write(f"{left} {right}\n")
    with open(directory / "vocab.json", "w", encoding="utf-8") as fh:
        json.dump(model.vocab, fh, ensure_ascii=False, indent=0, sort_keys=True)
    with open(directory / "specials.json", "w", encoding="utf-8") as fh:
        json.dump(model.specials, fh, ensure_ascii=False, indent=0, sort_keys=True)


def load_bpe(directory: str | Path) -> BpeModel:
    directory = Path(directory)
    merges = []
    with open(directory / "merges.txt", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            left, right = line.split(" ")
            merges.append((left, right))
    with open(directory / "vocab.json", encoding="utf-8") as fh:
        vocab = json.load(fh)
    with open(directory / "specials.json", encoding="utf-8") as fh:
        specials = json.load(fh)
    return BpeModel(merges=merges, vocab=vocab, specials=specials)
