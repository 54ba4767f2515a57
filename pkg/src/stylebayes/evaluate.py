"""Verification metrics in the PAN shared-task convention.

All four metrics consume per-trial probability values in [0, 1] and binary
ground-truth labels (positive class = same author).  The value 0.5 is the
non-answer sentinel: c@1 rewards it with pro-rated credit, f_05_u counts it
as a false negative, and f1 ignores it entirely.  The headline number is
the arithmetic mean of the four.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

NON_ANSWER = 0.5


def _arrays(values, labels) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(values, dtype=float)
    l = np.asarray(labels, dtype=bool)
    if v.shape != l.shape or v.ndim != 1:
        raise ValueError(f"values and labels must be equal-length 1-d, got {v.shape} / {l.shape}")
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise ValueError("values must lie in [0, 1]")
    return v, l


def auc(values, labels) -> float:
    """Probability that a random positive outranks a random negative; ties count 1/2."""
    v, l = _arrays(values, labels)
    n_pos = int(l.sum())
    n_neg = int(l.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs at least one positive and one negative label")
    ranks = rankdata(v)
    return float((ranks[l].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def c_at_1(values, labels) -> float:
    """Accuracy with pro-rated credit for non-answers."""
    v, l = _arrays(values, labels)
    n = v.size
    if n == 0:
        raise ValueError("c_at_1 needs at least one trial")
    correct = ((v > NON_ANSWER) & l) | ((v < NON_ANSWER) & ~l)
    n_correct = int(correct.sum())
    n_unanswered = int((v == NON_ANSWER).sum())
    return (n_correct + n_unanswered * n_correct / n) / n


def f_05_u(values, labels) -> float:
    """F-score with beta=0.5 where non-answers count as false negatives."""
    v, l = _arrays(values, labels)
    if v.size == 0:
        raise ValueError("f_05_u needs at least one trial")
    n_tp = int(((v > NON_ANSWER) & l).sum())
    n_fn = int(((v < NON_ANSWER) & l).sum())
    n_fp = int(((v > NON_ANSWER) & ~l).sum())
    n_unanswered = int((v == NON_ANSWER).sum())
    denom = 1.25 * n_tp + 0.25 * (n_fn + n_unanswered) + n_fp
    if denom == 0.0:
        return 0.0
    return 1.25 * n_tp / denom


def f1_answered(values, labels) -> float:
    """Plain F1 over answered trials only; raises if everything is a non-answer."""
    v, l = _arrays(values, labels)
    answered = v != NON_ANSWER
    if not answered.any():
        raise ValueError("f1 needs at least one answered trial")
    v, l = v[answered], l[answered]
    n_tp = int(((v > NON_ANSWER) & l).sum())
    n_fn = int(((v < NON_ANSWER) & l).sum())
    n_fp = int(((v > NON_ANSWER) & ~l).sum())
    denom = 2 * n_tp + n_fp + n_fn
    if denom == 0:
        return 0.0
    return 2 * n_tp / denom


def overall(auc_value: float, c_at_1_value: float, f_05_u_value: float, f1_value: float) -> float:
    return (auc_value + c_at_1_value + f_05_u_value + f1_value) / 4.0


@dataclass(frozen=True)
class EvalResult:
    auc: float
    c_at_1: float
    f_05_u: float
    f1: float

    @property
    def overall(self) -> float:
        return overall(self.auc, self.c_at_1, self.f_05_u, self.f1)

    def as_dict(self, digits: int = 3) -> dict[str, float]:
        return {
            "auc": round(self.auc, digits),
            "c@1": round(self.c_at_1, digits),
            "f_05_u": round(self.f_05_u, digits),
            "F1": round(self.f1, digits),
            "overall": round(self.overall, digits),
        }


def evaluate_answers(values, labels) -> EvalResult:
    """All four metrics at once.

    For the degenerate all-non-answer case f1 is reported as 0.0 instead of
    raising, so that banding sweeps never crash mid-search.
    """
    v, l = _arrays(values, labels)
    try:
        f1 = f1_answered(v, l)
    except ValueError:
        f1 = 0.0
    return EvalResult(auc=auc(v, l), c_at_1=c_at_1(v, l), f_05_u=f_05_u(v, l), f1=f1)
