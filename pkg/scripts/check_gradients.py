#!/usr/bin/env python3
"""Gradient verification harness: analytic gradients vs central differences.

Runs the finite-difference check for (a) the probabilistic-layer loss with
respect to the mean and both precision factors, and (b) the composite
encoder + scoring loss at toy dimensions, and prints the max relative
errors.
"""

import time

import numpy as np
import torch

from stylebayes.encoder import DocumentEncoder, EncoderConfig, collate, contrastive_loss
from stylebayes.plda import (
    TwoCovarianceModel,
    bce_loss,
    precompute_score_params,
    same_author_probability,
    score_quadratic,
)
from stylebayes.preprocess import PreprocessConfig, build_vocab, document_units, tokenize
from stylebayes.train import finite_difference_check


def plda_check() -> float:
    rng = np.random.default_rng(0)
    model = TwoCovarianceModel(4)
    with torch.no_grad():
        model.mean.copy_(torch.as_tensor(rng.standard_normal(4)))
        model.raw_between.copy_(torch.as_tensor(0.4 * rng.standard_normal((4, 4))))
        model.raw_within.copy_(torch.as_tensor(0.4 * rng.standard_normal((4, 4))))
    y1 = torch.as_tensor(rng.standard_normal((6, 4)))
    y2 = torch.as_tensor(rng.standard_normal((6, 4)))
    labels = torch.as_tensor(rng.integers(0, 2, 6).astype(float))

    def loss_fn():
        probability = same_author_probability(
            score_quadratic(precompute_score_params(model), y1, y2)
        )
        return bce_loss(probability, labels).mean()

    return finite_difference_check(loss_fn, model.named_parameters(), eps=1e-4,
                                   samples_per_param=8, seed=1)


def composite_check() -> float:
    texts = [
        "the rain fell softly on the old roof that night .",
        "she walked, and walked, and then she walked some more !",
    ]
    stream = [tok for text in texts for tok in tokenize(text)]
    vocab = build_vocab(stream, max_tokens=60, max_chars=40, min_freq=1, fandoms=["Rain"])
    pre = PreprocessConfig(hop_length=3, overlapping_length=1, max_tokens=60, max_chars=40,
                           min_freq=1)
    config = EncoderConfig(char_emb_dim=3, token_emb_dim=4, word_rnn_dim=4, sent_rnn_dim=4,
                           lev_dim=4, dropout=0.0)
    encoder = DocumentEncoder(config, vocab, seed=5)
    plda = TwoCovarianceModel(config.lev_dim)
    batch = collate([document_units(t, "Rain", vocab, pre) for t in texts], vocab)
    labels = torch.tensor([1.0], dtype=torch.float64)

    def loss_fn():
        levs, _, _ = encoder(batch, training=False)
        y1, y2 = levs[0:1], levs[1:2]
        theta = contrastive_loss(y1, y2, labels, 0.2, 2.0).mean()
        prob = same_author_probability(score_quadratic(precompute_score_params(plda), y1, y2))
        return theta + bce_loss(prob, labels).mean()

    named = list(encoder.named_parameters()) + [
        (f"plda.{n}", p) for n, p in plda.named_parameters()
    ]
    return finite_difference_check(loss_fn, named, eps=1e-4, samples_per_param=4, seed=2)


if __name__ == "__main__":
    started = time.monotonic()
    print(f"probabilistic layer: max relative error {plda_check():.2e}")
    print(f"encoder + layer composite: max relative error {composite_check():.2e}")
    print(f"elapsed {time.monotonic() - started:.1f}s (tolerance 1e-3)")
