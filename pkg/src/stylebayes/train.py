"""Joint end-to-end optimization of the encoder and the scoring layer.

Every epoch re-samples fresh training pairs from the author pool, then
minimizes a weighted sum of the metric-learning loss (on embedding
distances) and the probabilistic-layer loss (binary cross entropy on the
Bayes-factor probability) with Adam and gradient clipping.  Per-epoch
diagnostics record both losses, the covariance log-determinants, and dev
metrics; the checkpoint with the best dev overall score wins.

All sub-seeds derive from one base seed by hashing, so a config and a seed
fully determine the run.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import CheckpointBundle
from .corpus import PairRecord, TruthRecord
from .encoder import DocumentEncoder, EncoderConfig, collate, contrastive_loss
from .evaluate import EvalResult, evaluate_answers
from .infer import model_pair_probabilities
from .plda import (
    TwoCovarianceModel,
    bce_loss,
    entropy_diagnostics,
    precompute_score_params,
    same_author_probability,
    score_quadratic,
)
from .preprocess import PreprocessConfig, Vocabulary, build_vocab, document_units, tokenize
from .resample import AuthorPool, sample_pairs


class NumericalFailure(RuntimeError):
    """Training produced a non-finite loss or gradient."""


def derive_seed(*parts) -> int:
    """Stable sub-seed from hashing the joined parts."""
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=4)
    return int.from_bytes(digest.digest(), "big")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-3
    plda_learning_rate: float | None = None  # None: same as learning_rate
    alpha: float = 1.0  # weight of the metric-learning loss
    beta: float = 1.0  # weight of the probabilistic-layer loss
    tau_s: float = 0.2
    tau_d: float = 2.0
    seed: int = 0
    ensemble_size: int = 5
    grad_clip: float = 1.0
    train_prefix_embeddings: bool = True

    def validate(self) -> list[str]:
        problems = []
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.plda_learning_rate is not None and self.plda_learning_rate <= 0:
            problems.append(
                f"plda_learning_rate must be > 0, got {self.plda_learning_rate}"
            )
        if self.alpha < 0 or self.beta < 0:
            problems.append(f"loss weights must be >= 0, got {self.alpha}, {self.beta}")
        if self.alpha + self.beta <= 0:
            problems.append("at least one loss weight must be positive")
        if not self.tau_s < self.tau_d:
            problems.append(f"tau_s must be < tau_d, got {self.tau_s} >= {self.tau_d}")
        if self.ensemble_size < 1:
            problems.append(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        return problems


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss_theta: float
    loss_phi: float
    logdet_b_inv: float
    logdet_w_inv: float
    dev: EvalResult


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


REPORT_COLUMNS = ("epoch", "loss_theta", "loss_phi", "logdetBinv", "logdetWinv", "dev_overall")


def report_to_csv(report: TrainReport) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for rec in report.records:
        lines.append(
            f"{rec.epoch},{rec.loss_theta!r},{rec.loss_phi!r},"
            f"{rec.logdet_b_inv!r},{rec.logdet_w_inv!r},{rec.dev.overall!r}"
        )
    return "\n".join(lines) + "\n"


def build_vocab_for_pool(
    pool: AuthorPool, doc_texts: dict[str, str], config: PreprocessConfig
) -> Vocabulary:
    """Vocabulary over every pooled document, with prefix slots for all fandoms."""

    def stream():
        for docs in pool.authors.values():
            for record in docs:
                yield from tokenize(doc_texts[record.doc_id])

    fandoms = {record.fandom for docs in pool.authors.values() for record in docs}
    return build_vocab(
        stream(), config.max_tokens, config.max_chars, config.min_freq, fandoms=sorted(fandoms)
    )


def _prepare_units(pool, doc_texts, vocab, preprocess_config):
    units = {}
    for docs in pool.authors.values():
        for record in docs:
            prepared = document_units(
                doc_texts[record.doc_id], record.fandom, vocab, preprocess_config
            )
            if not prepared:
                raise ValueError(f"document {record.doc_id[:12]} produced no units (empty text?)")
            units[record.doc_id] = prepared
    return units


def _assert_finite_grads(named_parameters) -> None:
    for name, param in named_parameters:
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise NumericalFailure(f"non-finite gradient in parameter group {name!r}")


def train_model(
    pool: AuthorPool,
    doc_texts: dict[str, str],
    dev_pairs: list[PairRecord],
    dev_truth: dict[str, TruthRecord],
    preprocess_config: PreprocessConfig,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    model_index: int = 0,
    vocab: Vocabulary | None = None,
) -> tuple[CheckpointBundle, TrainReport]:
    """Train one model; returns the best-dev checkpoint and the epoch log."""
    problems = train_config.validate() + encoder_config.validate() + preprocess_config.validate()
    if problems:
        raise ValueError("; ".join(problems))
    if not dev_pairs:
        raise ValueError("dev pairs must be nonempty (best-model selection needs them)")
    missing = [p.id for p in dev_pairs if p.id not in dev_truth]
    if missing:
        raise ValueError(f"dev truth does not cover pair ids: {missing[:5]}")

    model_seed = derive_seed(train_config.seed, "model", model_index)
    if vocab is None:
        vocab = build_vocab_for_pool(pool, doc_texts, preprocess_config)
    doc_units = _prepare_units(pool, doc_texts, vocab, preprocess_config)

    torch.manual_seed(derive_seed(model_seed, "dropout"))
    encoder = DocumentEncoder(encoder_config, vocab, seed=derive_seed(model_seed, "init"))
    plda = TwoCovarianceModel(encoder_config.lev_dim)
    bundle = CheckpointBundle(
        encoder=encoder,
        plda=plda,
        vocab=vocab,
        preprocess_config=preprocess_config,
        encoder_config=encoder_config,
        tau_s=train_config.tau_s,
        tau_d=train_config.tau_d,
        meta={"model_index": model_index, "model_seed": model_seed, "seed": train_config.seed},
    )
    parameters = list(encoder.parameters()) + list(plda.parameters())
    plda_lr = (
        train_config.learning_rate
        if train_config.plda_learning_rate is None
        else train_config.plda_learning_rate
    )
    optimizer = torch.optim.Adam(
        [
            {"params": list(encoder.parameters()), "lr": train_config.learning_rate},
            {"params": list(plda.parameters()), "lr": plda_lr},
        ]
    )
    dev_labels = [dev_truth[p.id].same for p in dev_pairs]

    report = TrainReport()
    best_overall = -1.0
    best_state = None
    for epoch in range(1, train_config.epochs + 1):
        examples = sample_pairs(pool, derive_seed(model_seed, "resample", epoch))
        theta_sum = 0.0
        phi_sum = 0.0
        n_seen = 0
        for start in range(0, len(examples), train_config.batch_size):
            batch = examples[start : start + train_config.batch_size]
            docs = [doc_units[ex.doc_ids[0]] for ex in batch] + [
                doc_units[ex.doc_ids[1]] for ex in batch
            ]
            levs, _, _ = encoder(collate(docs, vocab), training=True)
            y1, y2 = levs[: len(batch)], levs[len(batch) :]
            labels = torch.tensor([ex.label for ex in batch], dtype=torch.float64)

            loss_theta = contrastive_loss(
                y1, y2, labels, train_config.tau_s, train_config.tau_d
            ).mean()
            score_params = precompute_score_params(plda)
            probability = same_author_probability(score_quadratic(score_params, y1, y2))
            loss_phi = bce_loss(probability, labels).mean()
            total = train_config.alpha * loss_theta + train_config.beta * loss_phi
            if not torch.isfinite(total):
                raise NumericalFailure(
                    f"non-finite loss at epoch {epoch} "
                    f"(theta={loss_theta.item()!r}, phi={loss_phi.item()!r})"
                )

            optimizer.zero_grad()
            total.backward()
            _assert_finite_grads(encoder.named_parameters())
            _assert_finite_grads(plda.named_parameters())
            if not train_config.train_prefix_embeddings and encoder.token_emb.grad is not None:
                encoder.token_emb.grad[encoder.n_regular_tokens :] = 0.0
            torch.nn.utils.clip_grad_norm_(parameters, max_norm=train_config.grad_clip)
            optimizer.step()

            theta_sum += loss_theta.item() * len(batch)
            phi_sum += loss_phi.item() * len(batch)
            n_seen += len(batch)

        logdet_b_inv, logdet_w_inv = entropy_diagnostics(plda)
        dev_values = model_pair_probabilities(bundle, dev_pairs)
        dev_result = evaluate_answers(dev_values, dev_labels)
        report.records.append(
            EpochRecord(
                epoch=epoch,
                loss_theta=theta_sum / max(n_seen, 1),
                loss_phi=phi_sum / max(n_seen, 1),
                logdet_b_inv=logdet_b_inv,
                logdet_w_inv=logdet_w_inv,
                dev=dev_result,
            )
        )
        if dev_result.overall > best_overall:
            best_overall = dev_result.overall
            report.best_epoch = epoch
            best_state = (
                copy.deepcopy(encoder.state_dict()),
                copy.deepcopy(plda.state_dict()),
            )

    if best_state is not None:
        encoder.load_state_dict(best_state[0])
        plda.load_state_dict(best_state[1])
    bundle.meta["best_epoch"] = report.best_epoch
    return bundle, report


def train_ensemble(
    pool: AuthorPool,
    doc_texts: dict[str, str],
    dev_pairs: list[PairRecord],
    dev_truth: dict[str, TruthRecord],
    preprocess_config: PreprocessConfig,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
) -> list[tuple[CheckpointBundle, TrainReport]]:
    """Independent runs differing only in derived seeds; shared vocabulary."""
    vocab = build_vocab_for_pool(pool, doc_texts, preprocess_config)
    return [
        train_model(
            pool,
            doc_texts,
            dev_pairs,
            dev_truth,
            preprocess_config,
            encoder_config,
            train_config,
            model_index=index,
            vocab=vocab,
        )
        for index in range(train_config.ensemble_size)
    ]


def finite_difference_check(
    loss_fn,
    parameters,
    eps: float = 1e-4,
    samples_per_param: int = 4,
    seed: int = 0,
) -> float:
    """Max relative error between analytic gradients and central differences.

    `loss_fn` must rebuild the loss from the current parameter values on
    every call; `parameters` is an iterable of (name, tensor) pairs.  A
    few coordinates of every parameter tensor are probed.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    named = [(name, param) for name, param in parameters]
    grads = torch.autograd.grad(loss_fn(), [p for _, p in named])
    rng = np.random.default_rng(seed)
    worst = 0.0
    for (_, param), grad in zip(named, grads):
        flat = param.data.view(-1)
        n_coords = flat.numel()
        chosen = rng.choice(n_coords, size=min(samples_per_param, n_coords), replace=False)
        for coord in chosen:
            original = flat[coord].item()
            with torch.no_grad():
                flat[coord] = original + eps
                upper = float(loss_fn())
                flat[coord] = original - eps
                lower = float(loss_fn())
                flat[coord] = original
            numeric = (upper - lower) / (2.0 * eps)
            analytic = float(grad.view(-1)[coord])
            scale = max(abs(numeric) + abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst
