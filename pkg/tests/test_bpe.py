import random
import string
from collections import Counter

import pytest

from codelang.bpe import (
    BYTE_TO_SYMBOL,
    DEFAULT_SPECIALS,
    SPACE_MARKER,
    BpeError,
    bpe_decode,
    bpe_encode,
    bpe_tokens,
    load_bpe,
    save_bpe,
    train_bpe,
    word_tokenize,
    _split_chunks,
    _text_to_symbols,
)

MIN_VOCAB = 256 + len(DEFAULT_SPECIALS)


def brute_force_merges(texts, num_merges, specials=DEFAULT_SPECIALS):
    """Independent oracle: recount every pair from scratch each round.

    Same declared rules as the trained model: pairs counted over
    space-delimited chunks, ties to the lexicographically smallest pair,
    stop below count 2.
    """
    streams = [
        list(chunk)
        for text in texts
        for chunk in _split_chunks(_text_to_symbols(text))
    ]
    merges = []
    for _ in range(num_merges):
        counts = Counter()
        for stream in streams:
            for pair in zip(stream, stream[1:]):
                counts[pair] += 1
        candidates = [
            (count, pair) for pair, count in counts.items()
            if count >= 2 and pair[0] + pair[1] not in specials
        ]
        if not candidates:
            break
        top = max(c for c, _ in candidates)
        best_pair = min(pair for count, pair in candidates if count == top)
        merges.append(best_pair)
        merged = best_pair[0] + best_pair[1]
        new_streams = []
        for stream in streams:
            out = []
            i = 0
            while i < len(stream):
                if i + 1 < len(stream) and (stream[i], stream[i + 1]) == best_pair:
                    out.append(merged)
                    i += 2
                else:
                    out.append(stream[i])
                    i += 1
            new_streams.append(out)
        streams = new_streams
    return merges


def test_zero_merge_budget_encodes_raw_bytes():
    model = train_bpe(["hello world"], MIN_VOCAB)
    assert model.merges == []
    ids = bpe_encode(model, "hi")
    assert [model.inv_vocab[i] for i in ids] == ["h", "i"]


def test_banana_first_merge_breaks_tie_lexicographically():
    model = train_bpe(["banana banana"], MIN_VOCAB + 1)
    assert model.merges == [("a", "n")]
    assert bpe_tokens(model, "banana") == ["b", "an", "an", "a"]


def test_training_matches_brute_force_oracle():
    corpora = [
        ["banana banana"],
        ["def foo(): return foo", "def bar(): return bar"],
        ["aa aa aa bb bb", "ab ab ab"],
        ["the cat sat on the mat", "the rat sat"],
        ["x = x + 1\ny = y + 1\n"],
    ]
    for texts in corpora:
        budget = 12
        model = train_bpe(texts, MIN_VOCAB + budget)
        assert model.merges == brute_force_merges(texts, budget), texts


def test_roundtrip_random_strings():
    rng = random.Random(1234)
    pool = string.printable + "éüñ漢字🙂 "
    for _ in range(300):
        s = "".join(rng.choice(pool) for _ in range(rng.randint(0, 60)))
        model_texts = ["def f(x): return x", s]
        model = train_bpe(model_texts, MIN_VOCAB + 10)
        assert bpe_decode(model, bpe_encode(model, s)) == s


def test_zero_oov():
    model = train_bpe(["abc abc abc"], MIN_VOCAB + 5)
    for text in ["xyz unseen", "漢字", "\x00\x01\xff"]:
        ids = bpe_encode(model, text)
        assert all(i in model.inv_vocab for i in ids)


def test_merge_determinism():
    texts = ["for i in range(10): print(i)"] * 3 + ["while True: pass"]
    a = train_bpe(texts, MIN_VOCAB + 20)
    b = train_bpe(list(texts), MIN_VOCAB + 20)
    assert a.merges == b.merges
    assert a.vocab == b.vocab


def test_monotone_compression():
    texts = ["def process(data): return data.strip()"] * 4
    sample = "def process(x): return x"
    sizes = [MIN_VOCAB, MIN_VOCAB + 5, MIN_VOCAB + 15, MIN_VOCAB + 30]
    lengths = [len(bpe_encode(train_bpe(texts, v), sample)) for v in sizes]
    assert lengths == sorted(lengths, reverse=True)


def test_space_marker_semantics():
    model = train_bpe(["return return return value value value"], MIN_VOCAB + 30)
    tokens = bpe_tokens(model, "return value value")
    # tokens after the first word start a marker-prefixed subword
    rebuilt = "".join(tokens)
    assert SPACE_MARKER in rebuilt
    for tok in tokens:
        assert SPACE_MARKER not in tok[1:], f"marker inside token {tok!r}"


def test_truncation():
    model = train_bpe(["abcd"], MIN_VOCAB)
    assert len(bpe_encode(model, "abcdefgh", max_len=3)) == 3


def test_empty_text():
    model = train_bpe(["abc"], MIN_VOCAB)
    assert bpe_encode(model, "") == []
    assert bpe_decode(model, []) == ""


def test_decode_rejects_out_of_range_id():
    model = train_bpe(["abc"], MIN_VOCAB)
    with pytest.raises(BpeError):
        bpe_decode(model, [model.size])


def test_vocab_size_below_minimum_rejected():
    with pytest.raises(BpeError):
        train_bpe(["abc"], 100)


def test_save_load_roundtrip(tmp_path):
    model = train_bpe(["def f(): return 1", "def g(): return 2"], MIN_VOCAB + 25)
    save_bpe(model, tmp_path / "tok")
    loaded = load_bpe(tmp_path / "tok")
    assert loaded.merges == model.merges
    assert loaded.vocab == model.vocab
    assert loaded.specials == model.specials
    text = "def h(): return 3"
    assert bpe_encode(loaded, text) == bpe_encode(model, text)


def test_specials_never_inside_merges():
    # force "<s>" characters to be frequent in the corpus
    model = train_bpe(["<s> <s> <s> <s>"], MIN_VOCAB + 10)
    for left, right in model.merges:
        assert left + right not in DEFAULT_SPECIALS


REFERENCE_SNIPPET = "def split_lines(s): return s.split('\n')"
NEWLINE_SYMBOL = BYTE_TO_SYMBOL[ord("\n")]


def test_reference_vocab_reproduces_canonical_segmentation():
    import importlib.resources as resources

    ref = resources.files("codelang").joinpath("data/reference_vocab")
    model = load_bpe(ref)
    expected = [
        "def", SPACE_MARKER + "split", "_", "lines", "(", "s", ")", ":",
        SPACE_MARKER + "return", SPACE_MARKER + "s", ".", "split", "(", "'",
        NEWLINE_SYMBOL, "'", ")",
    ]
    assert bpe_tokens(model, REFERENCE_SNIPPET) == expected
    assert bpe_decode(model, bpe_encode(model, REFERENCE_SNIPPET)) == REFERENCE_SNIPPET


@pytest.mark.parametrize("text,expected", [
    ("", []),
    ("def f(x):", ["def", "f", "(", "x", ")", ":"]),
    ("s.split('\n')", ["s", ".", "split", "(", "'", "\n", "'", ")"]),
    ("a_b2 c-d", ["a_b2", "c", "-", "d"]),
])
def test_word_tokenize(text, expected):
    assert word_tokenize(text) == expected


def test_word_tokenize_never_mixes_char_classes():
    rng = random.Random(7)
    pool = string.ascii_letters + string.digits + "_.,(){}[]<>+-*/'\"\n\t "
    ident = set(string.ascii_letters + string.digits + "_")
    for _ in range(200):
        text = "".join(rng.choice(pool) for _ in range(40))
        for tok in word_tokenize(text):
            assert tok != ""
            has_ident = any(c in ident for c in tok)
            has_punct = any(c not in ident for c in tok)
            assert not (has_ident and has_punct), tok
