"""Ensemble inference: probability averaging, non-answer banding, calibration.

Each trained model scores a pair independently; the ensemble prediction is
the arithmetic mean of the per-model probabilities.  Predictions inside an
open band around 0.5 are replaced by exactly 0.5, the non-answer sentinel;
the band half-width is calibrated by grid search on held-out data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .checkpoint import CheckpointBundle
from .corpus import PairRecord, doc_fingerprint
from .encoder import collate
from .evaluate import evaluate_answers
from .plda import precompute_score_params, same_author_probability, score_quadratic
from .preprocess import document_units


@dataclass(frozen=True)
class Answer:
    """Per-pair verdict; the value 0.5 denotes a non-answer."""

    id: str
    value: float


def ensemble_probability(probabilities: Sequence[float]) -> float:
    """Arithmetic mean of the per-model same-author probabilities."""
    if len(probabilities) == 0:
        raise ValueError("ensemble needs at least one probability")
    values = np.asarray(probabilities, dtype=float)
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    return float(values.mean())


def apply_non_answer(probability: float, delta: float) -> float:
    """Map probabilities strictly inside (0.5 - delta, 0.5 + delta) to 0.5."""
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must be in [0, 0.5], got {delta}")
    if 0.5 - delta < probability < 0.5 + delta:
        return 0.5
    return probability


def grid_search_delta(
    probabilities: Sequence[float], labels: Sequence[bool], grid: Sequence[float]
) -> float:
    """Band half-width maximizing the overall metric; ties go to the smallest."""
    if len(grid) == 0:
        raise ValueError("delta grid is empty")
    if any(not 0.0 <= delta <= 0.5 for delta in grid):
        raise ValueError("delta grid must lie within [0, 0.5]")
    best_delta = None
    best_score = -1.0
    for delta in sorted(grid):
        banded = [apply_non_answer(p, delta) for p in probabilities]
        score = evaluate_answers(banded, labels).overall
        if score > best_score:
            best_delta, best_score = delta, score
    return float(best_delta)


DEFAULT_DELTA_GRID = tuple(round(0.01 * k, 2) for k in range(26))


def _document_embeddings(
    bundle: CheckpointBundle, docs: list[tuple[str, str]], batch_size: int = 16
) -> dict[tuple[str, str], np.ndarray]:
    """Encode unique (text, fandom) documents once each; keys are fingerprints."""
    unique: dict[tuple[str, str], tuple[str, str]] = {}
    for text, fandom in docs:
        unique.setdefault((doc_fingerprint(text), fandom), (text, fandom))
    keys = list(unique)
    embeddings: dict[tuple[str, str], np.ndarray] = {}
    bundle.encoder.eval()
    with torch.no_grad():
        for start in range(0, len(keys), batch_size):
            chunk = keys[start : start + batch_size]
            units = [
                document_units(
                    unique[key][0], unique[key][1], bundle.vocab, bundle.preprocess_config
                )
                for key in chunk
            ]
            empty = [i for i, u in enumerate(units) if not u]
            if empty:
                raise ValueError("document produced no units (empty text?)")
            levs, _, _ = bundle.encoder(collate(units, bundle.vocab), training=False)
            for key, lev in zip(chunk, levs):
                embeddings[key] = lev.numpy()
    return embeddings


def model_pair_probabilities(
    bundle: CheckpointBundle, pairs: list[PairRecord], batch_size: int = 16
) -> np.ndarray:
    """Same-author probability per pair under one model (eval mode)."""
    docs = [(pair.texts[i], pair.fandoms[i]) for pair in pairs for i in (0, 1)]
    embeddings = _document_embeddings(bundle, docs, batch_size=batch_size)
    left = np.stack(
        [embeddings[(doc_fingerprint(p.texts[0]), p.fandoms[0])] for p in pairs]
    )
    right = np.stack(
        [embeddings[(doc_fingerprint(p.texts[1]), p.fandoms[1])] for p in pairs]
    )
    with torch.no_grad():
        params = precompute_score_params(bundle.plda)
        scores = score_quadratic(params, left, right)
        return same_author_probability(scores).numpy()


def predict(
    pairs: list[PairRecord], bundles: list[CheckpointBundle], delta: float
) -> list[Answer]:
    """Full inference: encode, score with every model, average, band.

    Output order equals input order.
    """
    if not bundles:
        raise ValueError("predict needs at least one checkpoint")
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must be in [0, 0.5], got {delta}")
    if not pairs:
        return []
    per_model = np.stack([model_pair_probabilities(bundle, pairs) for bundle in bundles])
    averaged = per_model.mean(axis=0)
    return [
        Answer(id=pair.id, value=apply_non_answer(float(p), delta))
        for pair, p in zip(pairs, averaged)
    ]
