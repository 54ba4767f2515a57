"""Batch command-line surface for the verification pipeline.

Subcommands: stats, split, vocab, sample, train, predict, calibrate,
evaluate, heatmap.  Every command writes a manifest next to its outputs
and writes outputs atomically (temp file + rename).  Exit codes: 0 on
success, 2 on input errors, 3 on numerical failures.  All randomness
flows from --seed; sub-seeds are derived by hashing (seed, purpose,
epoch).
"""

from __future__ import annotations

import argparse
import html
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import (
    CorpusError,
    atomic_write_text,
    collect_author_records,
    dataset_stats,
    load_pairs,
    load_truth,
    save_pairs,
    save_truth,
    split_train_dev,
)
from .encoder import EncoderConfig, encode_document
from .evaluate import evaluate_answers
from .infer import DEFAULT_DELTA_GRID, grid_search_delta, predict
from .preprocess import PreprocessConfig, build_vocab, document_units, tokenize
from .resample import AuthorPool, examples_to_records, sample_pairs
from .train import NumericalFailure, TrainConfig, derive_seed, report_to_csv, train_ensemble

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class InputError(Exception):
    """User-facing input problem; exits with code 2."""


def _write_manifest(
    target: Path, command: str, args, inputs: list[str], outputs: list[str], started: float
) -> None:
    """One manifest per command, next to its outputs."""
    manifest = {
        "command": command,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": outputs,
        "artifact_version": __version__,
        "wall_clock_seconds": round(time.monotonic() - started, 3),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    if target.is_dir():
        path = target / f"{command}-manifest.json"
    else:
        path = target.parent / f"{target.name}.manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=1) + "\n")


def _write_json(path: Path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=1, ensure_ascii=False) + "\n")


def _load_pairs_checked(path: str):
    try:
        return load_pairs(path)
    except FileNotFoundError as exc:
        raise InputError(f"pairs file not found: {path}") from exc


def _load_truth_checked(path: str):
    try:
        return load_truth(path)
    except FileNotFoundError as exc:
        raise InputError(f"truth file not found: {path}") from exc


def _load_configs(path: str | None) -> tuple[PreprocessConfig, EncoderConfig, TrainConfig]:
    """Config JSON with optional 'preprocess', 'encoder', 'train' sections.

    All validation problems are collected and reported at once.
    """
    sections = {"preprocess": {}, "encoder": {}, "train": {}}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise InputError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc.msg}") from exc
        unknown = set(raw) - set(sections)
        if unknown:
            raise InputError(f"unknown config sections: {sorted(unknown)}")
        sections.update(raw)
    problems = []
    configs = []
    for name, cls in (
        ("preprocess", PreprocessConfig),
        ("encoder", EncoderConfig),
        ("train", TrainConfig),
    ):
        fields = cls.__dataclass_fields__
        extra = set(sections[name]) - set(fields)
        if extra:
            problems.append(f"unknown keys in '{name}' section: {sorted(extra)}")
            sections[name] = {k: v for k, v in sections[name].items() if k in fields}
        config = cls(**sections[name])
        problems.extend(f"{name}: {p}" for p in config.validate())
        configs.append(config)
    if problems:
        raise InputError("invalid configuration:\n  " + "\n  ".join(problems))
    return tuple(configs)


def _parse_grid(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_DELTA_GRID
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            values = np.arange(start, stop + step / 2, step)
            return tuple(round(float(v), 10) for v in values)
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise InputError(f"cannot parse grid {text!r}: use 'a,b,c' or 'start:stop:step'") from exc


def cmd_stats(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    truth = _load_truth_checked(args.truth) if args.truth else {}
    stats = dataset_stats(pairs, truth)
    for line in (
        f"pairs: {stats.n_pairs}",
        f"same-author: {stats.n_same}",
        f"different-author: {stats.n_different}",
        f"distinct authors: {stats.n_authors}",
        f"distinct fandoms: {stats.n_fandoms}",
    ):
        print(line)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, asdict(stats))
        _write_manifest(out, "stats", args, [args.pairs, args.truth or ""], [str(out)], started)
    return EXIT_OK


def cmd_split(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    truth = _load_truth_checked(args.truth)
    train, dev = split_train_dev(pairs, truth, args.dev_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, subset in (("train", train), ("dev", dev)):
        pairs_path = out / f"{name}-pairs.jsonl"
        truth_path = out / f"{name}-truth.jsonl"
        save_pairs(subset, pairs_path)
        save_truth({p.id: truth[p.id] for p in subset}, truth_path)
        outputs += [str(pairs_path), str(truth_path)]
    print(f"train pairs: {len(train)}  dev pairs: {len(dev)}")
    _write_manifest(out, "split", args, [args.pairs, args.truth], outputs, started)
    return EXIT_OK


def cmd_vocab(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    pre, _, _ = _load_configs(args.config)

    def stream():
        for pair in pairs:
            for text in pair.texts:
                yield from tokenize(text)

    fandoms = sorted({f for pair in pairs for f in pair.fandoms})
    vocab = build_vocab(stream(), pre.max_tokens, pre.max_chars, pre.min_freq, fandoms=fandoms)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vocab.save(out)
    print(f"tokens: {len(vocab.token_to_id)}  chars: {len(vocab.char_to_id)}  "
          f"prefixes: {len(vocab.prefix_to_id)}")
    _write_manifest(out, "vocab", args, [args.pairs], [str(out)], started)
    return EXIT_OK


def cmd_sample(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    truth = _load_truth_checked(args.truth)
    records, doc_texts = collect_author_records(pairs, truth)
    pool = AuthorPool(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for epoch in range(1, args.epochs + 1):
        examples = sample_pairs(pool, derive_seed(args.seed, "resample", epoch))
        epoch_records, labels = examples_to_records(examples, doc_texts, f"epoch{epoch}")
        path = out / f"pairs-epoch-{epoch}.jsonl"
        save_pairs(epoch_records, path, labels=labels)
        outputs.append(str(path))
        n_same = sum(labels.values())
        print(f"epoch {epoch}: {len(epoch_records)} pairs ({n_same} same)")
    _write_manifest(out, "sample", args, [args.pairs, args.truth], outputs, started)
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    truth = _load_truth_checked(args.truth)
    dev_pairs = _load_pairs_checked(args.dev_pairs)
    dev_truth = _load_truth_checked(args.dev_truth)
    pre, enc, train_cfg = _load_configs(args.config)
    if args.seed is not None:
        train_cfg = TrainConfig(**{**asdict(train_cfg), "seed": args.seed})
    records, doc_texts = collect_author_records(pairs, truth)
    pool = AuthorPool(records)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = train_ensemble(pool, doc_texts, dev_pairs, dev_truth, pre, enc, train_cfg)
    outputs = []
    for index, (bundle, report) in enumerate(results):
        ckpt_path = out / f"model-{index:03d}.npz"
        report_path = out / f"report-{index:03d}.csv"
        save_checkpoint(bundle, ckpt_path)
        atomic_write_text(report_path, report_to_csv(report))
        outputs += [str(ckpt_path), str(report_path)]
        best = report.records[report.best_epoch - 1]
        print(f"model {index}: best epoch {report.best_epoch}, dev overall "
              f"{best.dev.overall:.3f}")
    _write_manifest(
        out, "train", args,
        [args.pairs, args.truth, args.dev_pairs, args.dev_truth], outputs, started,
    )
    return EXIT_OK


def _load_bundles(spec: str) -> list:
    path = Path(spec)
    if path.is_dir():
        files = sorted(path.glob("*.npz"))
    else:
        files = [Path(part) for part in spec.split(",")]
    if not files:
        raise InputError(f"no checkpoints found under {spec!r}")
    bundles = []
    for file in files:
        if not file.exists():
            raise InputError(f"checkpoint not found: {file}")
        bundles.append(load_checkpoint(file))
    return bundles


def cmd_predict(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    bundles = _load_bundles(args.checkpoints)
    answers = predict(pairs, bundles, args.delta)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"id": a.id, "value": a.value}) for a in answers]
    atomic_write_text(out, "\n".join(lines) + ("\n" if lines else ""))
    print(f"wrote {len(answers)} answers ({sum(1 for a in answers if a.value == 0.5)} "
          f"non-answers)")
    _write_manifest(out, "predict", args, [args.pairs, args.checkpoints], [str(out)], started)
    return EXIT_OK


def _load_answers(path: str) -> dict[str, float]:
    answers = {}
    try:
        with open(path, encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                obj = json.loads(raw)
                if not isinstance(obj.get("id"), str) or "value" not in obj:
                    raise InputError(f"{path}:{line_no}: answers need 'id' and 'value'")
                value = float(obj["value"])
                if not 0.0 <= value <= 1.0:
                    raise InputError(f"{path}:{line_no}: value {value} outside [0, 1]")
                answers[obj["id"]] = value
    except FileNotFoundError as exc:
        raise InputError(f"answers file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from exc
    return answers


def _join_answers(answers: dict[str, float], truth) -> tuple[list[float], list[bool]]:
    missing = sorted(set(truth) - set(answers))
    if missing:
        raise InputError(
            f"answers missing for {len(missing)} ids present in truth: {missing[:10]}"
        )
    ids = [pair_id for pair_id in truth]
    return [answers[i] for i in ids], [truth[i].same for i in ids]


def cmd_calibrate(args) -> int:
    started = time.monotonic()
    answers = _load_answers(args.answers)
    truth = _load_truth_checked(args.truth)
    values, labels = _join_answers(answers, truth)
    grid = _parse_grid(args.grid)
    delta = grid_search_delta(values, labels, grid)
    banded = [v if not (0.5 - delta < v < 0.5 + delta) else 0.5 for v in values]
    result = evaluate_answers(banded, labels)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, {"delta": delta, "overall": round(result.overall, 3)})
    print(f"delta: {delta}  dev overall after banding: {result.overall:.3f}")
    _write_manifest(out, "calibrate", args, [args.answers, args.truth], [str(out)], started)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    answers = _load_answers(args.answers)
    truth = _load_truth_checked(args.truth)
    values, labels = _join_answers(answers, truth)
    result = evaluate_answers(values, labels)
    payload = result.as_dict(digits=3)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, payload)
    print("  ".join(f"{k}: {v:.3f}" for k, v in payload.items()))
    _write_manifest(out, "evaluate", args, [args.answers, args.truth], [str(out)], started)
    return EXIT_OK


_HEATMAP_STYLE = (
    "body{font-family:monospace;margin:2em;max-width:60em}"
    ".unit{margin:2px 0;padding:2px}"
    ".marker{display:inline-block;width:2.2em;height:1em;margin-right:6px;"
    "border:1px solid #99c}"
    ".word{padding:1px 2px;border-radius:2px}"
)


def _render_heatmap_doc(doc_index: int, units, trace) -> str:
    max_sent = max(float(w) for w in trace.sentence_weights) or 1.0
    max_word = max(float(w) for weights in trace.word_weights for w in weights) or 1.0
    rows = [f"<h2>document {doc_index + 1}</h2>"]
    for unit, sent_weight, word_weights in zip(units, trace.sentence_weights, trace.word_weights):
        marker = (
            f'<span class="marker" title="unit weight {float(sent_weight):.4f}" '
            f'style="background:rgba(40,70,220,{float(sent_weight) / max_sent:.4f})"></span>'
        )
        words = []
        for token, weight in zip((f"<{unit.prefix}>", *unit.tokens), word_weights):
            intensity = float(weight) / max_word
            words.append(
                f'<span class="word" title="{float(weight):.4f}" '
                f'style="background:rgba(230,40,40,{intensity:.4f})">'
                f"{html.escape(token)}</span>"
            )
        rows.append(f'<div class="unit">{marker}{" ".join(words)}</div>')
    return "\n".join(rows)


def cmd_heatmap(args) -> int:
    started = time.monotonic()
    pairs = _load_pairs_checked(args.pairs)
    by_id = {pair.id: pair for pair in pairs}
    if args.id not in by_id:
        raise InputError(f"unknown pair id {args.id!r}")
    pair = by_id[args.id]
    bundle = load_checkpoint(Path(args.checkpoint))

    sections = []
    weights_payload = []
    for side in (0, 1):
        units = document_units(
            pair.texts[side], pair.fandoms[side], bundle.vocab, bundle.preprocess_config
        )
        if not units:
            raise InputError(f"document {side + 1} of pair {args.id!r} is empty")
        _, trace = encode_document(units, bundle.encoder, bundle.vocab)
        sections.append(_render_heatmap_doc(side, units, trace))
        weights_payload.append(
            {
                "sentence_weights": [float(w) for w in trace.sentence_weights],
                "word_weights": [[float(w) for w in ws] for ws in trace.word_weights],
            }
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    page = (
        "<!doctype html><html><head><meta charset='utf-8'>"
        f"<title>attention heatmap {html.escape(args.id)}</title>"
        f"<style>{_HEATMAP_STYLE}</style></head><body>"
        f"<h1>pair {html.escape(args.id)}</h1>"
        + "".join(sections)
        + "</body></html>\n"
    )
    atomic_write_text(out, page)
    weights_path = out.parent / f"{out.stem}-weights.json"
    _write_json(weights_path, {"pair_id": args.id, "documents": weights_payload})
    print(f"wrote {out} and {weights_path}")
    _write_manifest(
        out, "heatmap", args, [args.pairs, args.checkpoint], [str(out), str(weights_path)],
        started,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylebayes",
        description="Authorship verification with style embeddings and Bayes-factor scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.set_defaults(func=func)
        return cmd

    stats = add("stats", cmd_stats, "dataset statistics for a pairs/truth file")
    stats.add_argument("--pairs", required=True)
    stats.add_argument("--truth")
    stats.add_argument("--out")

    split = add("split", cmd_split, "stratified train/dev split with leak removal")
    split.add_argument("--pairs", required=True)
    split.add_argument("--truth", required=True)
    split.add_argument("--dev-fraction", type=float, default=0.1)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out", required=True)

    vocab = add("vocab", cmd_vocab, "build and persist the masked vocabulary")
    vocab.add_argument("--pairs", required=True)
    vocab.add_argument("--config")
    vocab.add_argument("--out", required=True)

    sample = add("sample", cmd_sample, "materialize per-epoch re-sampled pairs")
    sample.add_argument("--pairs", required=True)
    sample.add_argument("--truth", required=True)
    sample.add_argument("--epochs", type=int, default=1)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", required=True)

    train = add("train", cmd_train, "train an ensemble of verification models")
    train.add_argument("--pairs", required=True)
    train.add_argument("--truth", required=True)
    train.add_argument("--dev-pairs", required=True)
    train.add_argument("--dev-truth", required=True)
    train.add_argument("--config")
    train.add_argument("--seed", type=int)
    train.add_argument("--out", required=True)

    predict_cmd = add("predict", cmd_predict, "score pairs with an ensemble of checkpoints")
    predict_cmd.add_argument("--pairs", required=True)
    predict_cmd.add_argument("--checkpoints", required=True,
                             help="checkpoint directory or comma-separated files")
    predict_cmd.add_argument("--delta", type=float, default=0.0)
    predict_cmd.add_argument("--out", required=True)

    calibrate = add("calibrate", cmd_calibrate, "grid-search the non-answer band width")
    calibrate.add_argument("--answers", required=True,
                           help="raw probabilities (predict with --delta 0)")
    calibrate.add_argument("--truth", required=True)
    calibrate.add_argument("--grid", help="'a,b,c' or 'start:stop:step'")
    calibrate.add_argument("--out", required=True)

    evaluate_cmd = add("evaluate", cmd_evaluate, "challenge metrics for an answers file")
    evaluate_cmd.add_argument("--answers", required=True)
    evaluate_cmd.add_argument("--truth", required=True)
    evaluate_cmd.add_argument("--out", required=True)

    heatmap = add("heatmap", cmd_heatmap, "attention heatmap report for one pair")
    heatmap.add_argument("--pairs", required=True)
    heatmap.add_argument("--id", required=True)
    heatmap.add_argument("--checkpoint", required=True)
    heatmap.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, CorpusError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except torch.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
