"""Subcommand front-end for the full pipeline.

Exit codes: 0 success, 1 usage error, 2 data/model error. Every subcommand
writes a manifest (inputs, config hash, seed, toolkit version) next to its
outputs, and all randomness comes from explicit seeds.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bpe import load_bpe, save_bpe, train_bpe
from .corpus import (
    CleaningPolicy,
    CorpusError,
    class_histogram,
    clean_and_filter,
    load_jsonl,
    save_jsonl,
    split_manifest,
    stratified_split,
)
from .metrics import EvalReport, ClassMetrics, MetricsError, evaluate_model
from .minicorpus import generate_mini_corpus
from .naive_bayes import fit_nb, load_nb, nb_posterior, nb_predict, save_nb
from .reporting import (
    report_to_json,
    report_to_table,
    save_history_figure,
    save_report,
)
from .training import (
    MaskingPolicy,
    OptimizerHyper,
    TrainingError,
    finetune,
    predict_labels,
    pretrain_mlm,
)
from .bpe import BpeError
from .transformer import EncoderConfig, ModelError, init_params, load_params, save_params


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config_overlay(args, keys):
    """Start from --config JSON (if given), then let explicit flags win."""
    config = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config.update(json.load(fh))
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _write_manifest(output: Path, command: str, inputs: list[str], config: dict, seed) -> None:
    output = Path(output)
    directory = output if output.is_dir() else output.parent
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    manifest = {
        "command": command,
        "inputs": [str(p) for p in inputs],
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "config": config,
        "seed": seed,
        "version": __version__,
    }
    name = output.name if not output.is_dir() else command
    with open(directory / f"{name}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def _cmd_preprocess(args) -> int:
    corpus = load_jsonl(args.input)
    excluded = tuple(x for x in (args.exclude or "").split(",") if x)
    policy = CleaningPolicy(
        min_chars=args.min_chars,
        max_chars=args.max_chars,
        excluded_labels=excluded,
    )
    cleaned = clean_and_filter(corpus, policy)
    save_jsonl(cleaned, args.output)
    _write_manifest(Path(args.output), "preprocess", [args.input], asdict(policy), None)
    for label, count in class_histogram(cleaned).items():
        print(f"{label}\t{count}")
    print(f"kept {len(cleaned)} of {len(corpus)} snippets across {len(cleaned.labels)} labels")
    return 0


def _cmd_split(args) -> int:
    corpus = load_jsonl(args.input)
    train, test = stratified_split(corpus, args.test_fraction, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_jsonl(train, out / "train.jsonl")
    save_jsonl(test, out / "test.jsonl")
    manifest = split_manifest(train, test, args.seed, args.test_fraction)
    with open(out / "split_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    _write_manifest(out, "split", [args.input],
                    {"test_fraction": args.test_fraction}, args.seed)
    print(f"train {len(train)} / test {len(test)}")
    return 0


def _cmd_train_bpe(args) -> int:
    corpus = load_jsonl(args.input)
    model = train_bpe([s.text for s in corpus.snippets], args.vocab_size)
    save_bpe(model, args.output)
    _write_manifest(Path(args.output), "train-bpe", [args.input],
                    {"vocab_size": args.vocab_size}, None)
    print(f"trained {len(model.merges)} merges, vocab size {model.size}")
    return 0


def _encoder_config(args, vocab_size: int, num_classes: int) -> EncoderConfig:
    overlay = _config_overlay(args, ["max_len", "model_dim", "num_heads", "num_layers",
                                     "ff_dim", "dropout"])
    allowed = {"max_len", "model_dim", "num_heads", "num_layers", "ff_dim", "dropout"}
    fields = {k: v for k, v in overlay.items() if k in allowed}
    return EncoderConfig(vocab_size=vocab_size, num_classes=num_classes, **fields)


def _hyper(args, steps: int) -> OptimizerHyper:
    return OptimizerHyper(
        lr_peak=args.lr_peak,
        weight_decay=args.weight_decay,
        warmup_steps=max(1, steps // 10),
        total_steps=steps,
    )


def _cmd_pretrain(args) -> int:
    corpus = load_jsonl(args.input)
    tokenizer = load_bpe(args.tokenizer)
    num_classes = args.num_classes or max(1, len(corpus.labels))
    config = _encoder_config(args, tokenizer.size, num_classes)
    hyper = _hyper(args, args.steps)
    params, history = pretrain_mlm(
        corpus, tokenizer, config, hyper, MaskingPolicy(), args.seed,
        batch_size=args.batch_size,
    )
    out = Path(args.output)
    save_params(params, out)
    history.save_csv(out / "history.csv")
    save_history_figure(history.steps, history.losses, out / "history.png", "MLM loss")
    _write_manifest(out, "pretrain", [args.input, args.tokenizer],
                    {"config": asdict(config), "hyper": asdict(hyper),
                     "batch_size": args.batch_size}, args.seed)
    print(f"pretrained {args.steps} steps; final loss {history.losses[-1]:.4f}")
    return 0


def _cmd_finetune(args) -> int:
    corpus = load_jsonl(args.input)
    tokenizer = load_bpe(args.tokenizer)
    if args.model:
        params = load_params(args.model)
        if params.config.num_classes < len(corpus.labels):
            raise TrainingError("pretrained head smaller than the corpus label set")
    else:
        config = _encoder_config(args, tokenizer.size, len(corpus.labels))
        params = init_params(config, args.seed)
    hyper = _hyper(args, args.steps)
    params, history = finetune(corpus, tokenizer, params, hyper, args.seed,
                               batch_size=args.batch_size)
    out = Path(args.output)
    save_params(params, out)
    with open(out / "labels.json", "w", encoding="utf-8") as fh:
        json.dump(list(corpus.labels.labels), fh, indent=2)
    history.save_csv(out / "history.csv")
    save_history_figure(history.steps, history.losses, out / "history.png", "Fine-tune loss")
    _write_manifest(out, "finetune", [args.input, args.tokenizer, args.model or ""],
                    {"hyper": asdict(hyper), "batch_size": args.batch_size}, args.seed)
    print(f"fine-tuned {args.steps} steps; final loss {history.losses[-1]:.4f}")
    return 0


def _cmd_train_nb(args) -> int:
    corpus = load_jsonl(args.input)
    model = fit_nb(corpus, alpha=args.alpha)
    save_nb(model, args.output)
    _write_manifest(Path(args.output), "train-nb", [args.input], {"alpha": args.alpha}, None)
    print(f"trained Naive Bayes over {len(model.vocabulary)} token types")
    return 0


def _load_predictor(model_path: str, tokenizer_path: str | None):
    """Returns (predict(text) -> label, rank(text) -> [(label, confidence)])."""
    path = Path(model_path)
    if path.is_file():
        nb = load_nb(path)

        def rank(text):
            posterior = nb_posterior(nb, text)
            pairs = sorted(zip(nb.labels, posterior), key=lambda x: -x[1])
            return pairs

        return (lambda text: nb_predict(nb, text)), rank

    params = load_params(path)
    if tokenizer_path is None:
        tokenizer_path = path / "tokenizer"
        if not Path(tokenizer_path).exists():
            raise UsageError("--tokenizer is required for transformer models")
    tokenizer = load_bpe(tokenizer_path)
    with open(path / "labels.json", encoding="utf-8") as fh:
        labels = json.load(fh)

    def predict(text):
        return predict_labels(params, tokenizer, [text], labels)[0]

    def rank(text):
        from .transformer import TokenBatch, classify
        from .training import encode_snippet

        row = encode_snippet(tokenizer, text, params.config.max_len)
        ids = np.array([row])
        mask = np.ones_like(ids)
        logits = classify(params, TokenBatch(ids=ids, mask=mask),
                          bos_id=tokenizer.specials["<s>"]).data[0]
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        order = np.argsort(-probs)
        return [(labels[i], float(probs[i])) for i in order if i < len(labels)]

    return predict, rank


def _cmd_evaluate(args) -> int:
    test = load_jsonl(args.input)
    predict, _ = _load_predictor(args.model, args.tokenizer)
    report = evaluate_model(predict, test)
    out = Path(args.output)
    save_report(report, out, stem="eval", figures=not args.no_figures)
    _write_manifest(out, "evaluate", [args.input, args.model], {}, None)
    if args.report_format == "json":
        print(report_to_json(report))
    else:
        print(report_to_table(report))
    return 0


def _cmd_predict(args) -> int:
    _, rank = _load_predictor(args.model, args.tokenizer)
    text = args.text if args.text is not None else sys.stdin.read()
    for label, confidence in rank(text):
        print(f"{label}\t{confidence:.6f}")
    return 0


def _cmd_report(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        payload = json.load(fh)
    report = EvalReport(
        labels=payload["labels"],
        per_class=[ClassMetrics(**m) for m in payload["per_class"]],
        accuracy=payload["accuracy"],
        macro_precision=payload["macro_precision"],
        macro_recall=payload["macro_recall"],
        macro_f1=payload["macro_f1"],
        weighted_precision=payload["weighted_precision"],
        weighted_recall=payload["weighted_recall"],
        weighted_f1=payload["weighted_f1"],
        confusability=[(c["actual"], c["predicted"], c["rate"])
                       for c in payload["confusability"]],
        matrix=payload["matrix"],
    )
    out = Path(args.output)
    save_report(report, out, stem="report")
    _write_manifest(out, "report", [args.input], {}, None)
    if args.report_format == "json":
        print(report_to_json(report))
    else:
        print(report_to_table(report))
    return 0


def _cmd_make_corpus(args) -> int:
    corpus = generate_mini_corpus(per_language=args.per_language, seed=args.seed)
    save_jsonl(corpus, args.output)
    _write_manifest(Path(args.output), "make-corpus", [],
                    {"per_language": args.per_language}, args.seed)
    print(f"wrote {len(corpus)} snippets across {len(corpus.labels)} languages")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="codelang",
                     description="Source-code language identification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--config", help="JSON config file; explicit flags override")
        p.add_argument("--seed", type=int, default=0)
        if output:
            p.add_argument("--output", required=True)

    p = sub.add_parser("preprocess", help="clean and filter a raw JSONL corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--exclude", help="comma-separated labels to drop")
    p.add_argument("--min-chars", type=int, default=10, dest="min_chars")
    p.add_argument("--max-chars", type=int, default=10_000, dest="max_chars")
    common(p)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("split", help="stratified train/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2, dest="test_fraction")
    common(p)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train-bpe", help="train the byte-level BPE tokenizer")
    p.add_argument("--input", required=True)
    p.add_argument("--vocab-size", type=int, default=8000, dest="vocab_size")
    common(p)
    p.set_defaults(func=_cmd_train_bpe)

    def train_flags(p):
        p.add_argument("--tokenizer", required=True)
        p.add_argument("--steps", type=int, default=500)
        p.add_argument("--batch-size", type=int, default=32, dest="batch_size")
        p.add_argument("--lr-peak", type=float, default=1e-3, dest="lr_peak")
        p.add_argument("--weight-decay", type=float, default=0.01, dest="weight_decay")
        p.add_argument("--max-len", type=int, dest="max_len")
        p.add_argument("--model-dim", type=int, dest="model_dim")
        p.add_argument("--num-heads", type=int, dest="num_heads")
        p.add_argument("--num-layers", type=int, dest="num_layers")
        p.add_argument("--ff-dim", type=int, dest="ff_dim")
        p.add_argument("--dropout", type=float, dest="dropout")

    p = sub.add_parser("pretrain", help="MLM pretraining from scratch")
    p.add_argument("--input", required=True)
    p.add_argument("--num-classes", type=int, dest="num_classes")
    train_flags(p)
    common(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning of the classifier")
    p.add_argument("--input", required=True)
    p.add_argument("--model", help="pretrained parameter directory (optional)")
    train_flags(p)
    common(p)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("train-nb", help="train the Naive Bayes baseline")
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    common(p)
    p.set_defaults(func=_cmd_train_nb)

    p = sub.add_parser("evaluate", help="evaluate a model on a test corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--tokenizer")
    p.add_argument("--report-format", choices=("json", "table"), default="table",
                   dest="report_format")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="rank labels for one snippet")
    p.add_argument("--model", required=True)
    p.add_argument("--tokenizer")
    p.add_argument("--text", help="snippet text; read from stdin when absent")
    common(p, output=False)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("report", help="re-render a saved evaluation report")
    p.add_argument("--input", required=True)
    p.add_argument("--report-format", choices=("json", "table"), default="table",
                   dest="report_format")
    common(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("make-corpus", help="write the bundled 5-language demo corpus")
    p.add_argument("--per-language", type=int, default=320, dest="per_language")
    common(p)
    p.set_defaults(func=_cmd_make_corpus)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, MetricsError, ModelError, TrainingError, BpeError, OSError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
