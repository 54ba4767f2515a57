#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus, driven through the CLI.

Generates a corpus of synthetic authors, trains an ensemble, calibrates
the non-answer band on dev, predicts on test, and prints the evaluation.
Everything lands under --out (default ./e2e-run).
"""

import argparse
import json
import sys
import time
from pathlib import Path

from stylebayes.cli import main as cli
from stylebayes.corpus import save_pairs, save_truth
from stylebayes.synthetic import generate_corpus

CONFIG = {
    "preprocess": {"hop_length": 16, "overlapping_length": 4, "max_tokens": 5000,
                   "max_chars": 150, "min_freq": 2},
    "encoder": {"char_emb_dim": 8, "token_emb_dim": 16, "word_rnn_dim": 16,
                "sent_rnn_dim": 16, "lev_dim": 8, "dropout": 0.0},
    "train": {"epochs": 12, "batch_size": 8, "learning_rate": 0.02,
              "plda_learning_rate": 0.002, "ensemble_size": 3},
}


def run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    print(f"generating {args.authors} synthetic authors ...")
    corpus = generate_corpus(n_authors=args.authors, tokens_per_doc=args.tokens,
                             seed=args.seed)
    files = {}
    for name in ("train", "dev", "test"):
        split = getattr(corpus, name)
        files[f"{name}_pairs"] = out / f"{name}-pairs.jsonl"
        files[f"{name}_truth"] = out / f"{name}-truth.jsonl"
        save_pairs(split.pairs, files[f"{name}_pairs"])
        save_truth(split.truth, files[f"{name}_truth"])
        print(f"  {name}: {len(split.pairs)} pairs")
    config_path = out / "config.json"
    config = dict(CONFIG)
    config["train"] = {**CONFIG["train"], "epochs": args.epochs, "seed": args.seed}
    config_path.write_text(json.dumps(config, indent=1))

    steps = [
        ["train",
         "--pairs", str(files["train_pairs"]), "--truth", str(files["train_truth"]),
         "--dev-pairs", str(files["dev_pairs"]), "--dev-truth", str(files["dev_truth"]),
         "--config", str(config_path), "--seed", str(args.seed),
         "--out", str(out / "run")],
        ["predict",
         "--pairs", str(files["dev_pairs"]), "--checkpoints", str(out / "run"),
         "--delta", "0.0", "--out", str(out / "dev-answers.jsonl")],
        ["calibrate",
         "--answers", str(out / "dev-answers.jsonl"), "--truth", str(files["dev_truth"]),
         "--out", str(out / "delta.json")],
    ]
    for step in steps:
        print(f"\n$ stylebayes {' '.join(step)}")
        code = cli(step)
        if code != 0:
            return code

    delta = json.loads((out / "delta.json").read_text())["delta"]
    for step in (
        ["predict",
         "--pairs", str(files["test_pairs"]), "--checkpoints", str(out / "run"),
         "--delta", str(delta), "--out", str(out / "answers.jsonl")],
        ["evaluate",
         "--answers", str(out / "answers.jsonl"), "--truth", str(files["test_truth"]),
         "--out", str(out / "evaluation.json")],
    ):
        print(f"\n$ stylebayes {' '.join(step)}")
        code = cli(step)
        if code != 0:
            return code

    print(f"\ntotal wall clock: {time.monotonic() - started:.0f}s")
    print(f"results in {out / 'evaluation.json'}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="e2e-run")
    parser.add_argument("--authors", type=int, default=100)
    parser.add_argument("--tokens", type=int, default=500)
    parser.add_argument("--epochs", type=int, default=12)
    parser.add_argument("--seed", type=int, default=11)
    sys.exit(run(parser.parse_args()))
