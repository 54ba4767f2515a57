"""Two-covariance Gaussian model with Bayes-factor scoring of embedding pairs.

The generative story: an observed style embedding decomposes as
``y = x + noise`` where ``x ~ N(mean, B^-1)`` carries the author identity
and ``noise ~ N(0, W^-1)`` absorbs residual (e.g. topical) variation.
``B`` is the between-author precision, ``W`` the within-author precision.

Verification scores are log-likelihood ratios between the same-author and
different-author hypotheses.  They can be evaluated directly from Gaussian
densities (`score_direct`) or, equivalently, through a precomputed
symmetric quadratic form in the two embeddings (`score_quadratic`).

All computations run in float64.  Precisions are parameterized by
lower-triangular factors whose diagonals are stored unconstrained and
exponentiated on use, so the reconstructed matrices are symmetric positive
definite for arbitrary parameter values and the model can be trained by
plain gradient descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

DTYPE = torch.float64

_LOG_2PI = math.log(2.0 * math.pi)


def _factor_from_raw(raw: torch.Tensor) -> torch.Tensor:
    """Lower-triangular factor with exponentiated diagonal."""
    return torch.tril(raw, diagonal=-1) + torch.diag_embed(
        torch.exp(torch.diagonal(raw, dim1=-2, dim2=-1))
    )


def _raw_from_factor(factor: torch.Tensor) -> torch.Tensor:
    diag = torch.diagonal(factor)
    if torch.any(diag <= 0):
        raise ValueError("factor diagonal must be positive")
    return torch.tril(factor, diagonal=-1) + torch.diag_embed(torch.log(diag))


class TwoCovarianceModel(torch.nn.Module):
    """Trainable mean and precision factors of the two-covariance model.

    Parameters are ``mean`` plus two raw lower-triangular matrices; the
    reconstructed precisions are ``B = L_B L_B^T`` and ``W = L_W L_W^T``.
    Fresh models start at ``mean = 0`` and ``B = W = I``.
    """

    def __init__(self, dim: int):
        super().__init__()
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.mean = torch.nn.Parameter(torch.zeros(dim, dtype=DTYPE))
        self.raw_between = torch.nn.Parameter(torch.zeros(dim, dim, dtype=DTYPE))
        self.raw_within = torch.nn.Parameter(torch.zeros(dim, dim, dtype=DTYPE))

    @classmethod
    def from_precisions(
        cls, between: torch.Tensor, within: torch.Tensor, mean: torch.Tensor | None = None
    ) -> "TwoCovarianceModel":
        """Build a model holding the given SPD precision matrices exactly."""
        between = torch.as_tensor(between, dtype=DTYPE)
        within = torch.as_tensor(within, dtype=DTYPE)
        dim = between.shape[0]
        if between.shape != (dim, dim) or within.shape != (dim, dim):
            raise ValueError("precision matrices must be square and equally sized")
        model = cls(dim)
        with torch.no_grad():
            model.raw_between.copy_(_raw_from_factor(torch.linalg.cholesky(between)))
            model.raw_within.copy_(_raw_from_factor(torch.linalg.cholesky(within)))
            if mean is not None:
                model.mean.copy_(torch.as_tensor(mean, dtype=DTYPE))
        return model

    def between_factor(self) -> torch.Tensor:
        return _factor_from_raw(self.raw_between)

    def within_factor(self) -> torch.Tensor:
        return _factor_from_raw(self.raw_within)

    def between_precision(self) -> torch.Tensor:
        factor = self.between_factor()
        return factor @ factor.T

    def within_precision(self) -> torch.Tensor:
        factor = self.within_factor()
        return factor @ factor.T


@dataclass
class GaussianPosterior:
    """Posterior over the author-identity variable after n observations."""

    precision: torch.Tensor
    natural_mean: torch.Tensor

    @property
    def mean(self) -> torch.Tensor:
        chol = torch.linalg.cholesky(self.precision)
        return torch.cholesky_solve(self.natural_mean.unsqueeze(-1), chol).squeeze(-1)

    @property
    def covariance(self) -> torch.Tensor:
        return torch.cholesky_inverse(torch.linalg.cholesky(self.precision))


@dataclass
class ScoreParams:
    """Coefficients of the quadratic verification score.

    ``score(y1, y2) = y1' C y2 + y2' C y1 + y1' S y1 + y2' S y2
                      + (y1 + y2)' r + offset``
    with cross-term matrix ``C``, self-term matrix ``S``, linear term ``r``.
    The auxiliary matrices are the posterior covariances after one and two
    observations, ``(B + W)^-1`` and ``(B + 2W)^-1``.
    """

    cross_coeff: torch.Tensor
    self_coeff: torch.Tensor
    linear_coeff: torch.Tensor
    offset: torch.Tensor
    posterior_cov_one: torch.Tensor
    posterior_cov_two: torch.Tensor


def _as_embedding(y, dim: int, name: str) -> torch.Tensor:
    t = torch.as_tensor(y, dtype=DTYPE)
    if t.ndim < 1 or t.shape[-1] != dim:
        raise ValueError(f"{name} must have trailing dimension {dim}, got shape {tuple(t.shape)}")
    return t


def _logdet_from_chol(chol: torch.Tensor) -> torch.Tensor:
    return 2.0 * torch.log(torch.diagonal(chol, dim1=-2, dim2=-1)).sum(-1)


def _solve_quad(gamma: torch.Tensor, chol: torch.Tensor) -> torch.Tensor:
    """gamma' L^-1 gamma for a batch of gamma, L given by its Cholesky factor."""
    solved = torch.cholesky_solve(gamma.unsqueeze(-1), chol).squeeze(-1)
    return (gamma * solved).sum(-1)


def log_gaussian(value: torch.Tensor, mean: torch.Tensor, precision: torch.Tensor) -> torch.Tensor:
    """Log density of N(mean, precision^-1) at value; batched over leading dims."""
    dim = precision.shape[-1]
    delta = value - mean
    chol = torch.linalg.cholesky(precision)
    logdet = _logdet_from_chol(chol)
    quad = (delta * (delta @ precision)).sum(-1)
    return -0.5 * dim * _LOG_2PI + 0.5 * logdet - 0.5 * quad


def posterior(model: TwoCovarianceModel, embeddings) -> GaussianPosterior:
    """Posterior over the author variable given n same-author embeddings.

    With zero embeddings this is exactly the prior: precision B and natural
    mean B @ mean.
    """
    b = model.between_precision()
    w = model.within_precision()
    if embeddings is None:
        stack = torch.zeros((0, model.dim), dtype=DTYPE)
    else:
        stack = torch.as_tensor(embeddings, dtype=DTYPE)
        if stack.ndim == 1:
            stack = stack.unsqueeze(0)
    if stack.ndim != 2 or (stack.shape[0] > 0 and stack.shape[1] != model.dim):
        raise ValueError(f"embeddings must be (n, {model.dim}), got {tuple(stack.shape)}")
    n = stack.shape[0]
    precision = b + n * w
    natural_mean = b @ model.mean + (stack.sum(0) @ w if n else torch.zeros(model.dim, dtype=DTYPE))
    return GaussianPosterior(precision=precision, natural_mean=natural_mean)


def log_joint_same(model: TwoCovarianceModel, y1, y2, latent=None) -> torch.Tensor:
    """Log joint density of (y1, y2) under the same-author hypothesis.

    Evaluated through the identity
    ``p(y1, y2) = p(y1|x) p(y2|x) p(x) / p(x|y1, y2)``
    which holds for every latent point x; the default uses x = 0.
    """
    y1 = _as_embedding(y1, model.dim, "y1")
    y2 = _as_embedding(y2, model.dim, "y2")
    b = model.between_precision()
    w = model.within_precision()
    x = (
        torch.zeros(model.dim, dtype=DTYPE)
        if latent is None
        else _as_embedding(latent, model.dim, "latent")
    )
    pair_precision = b + 2.0 * w
    gamma = b @ model.mean + (y1 + y2) @ w
    chol = torch.linalg.cholesky(pair_precision)
    post_mean = torch.cholesky_solve(gamma.unsqueeze(-1), chol).squeeze(-1)
    return (
        log_gaussian(y1, x, w)
        + log_gaussian(y2, x, w)
        + log_gaussian(x, model.mean, b)
        - log_gaussian(x, post_mean, pair_precision)
    )


def log_evidence(model: TwoCovarianceModel, y) -> torch.Tensor:
    """Log marginal density of a single embedding, N(mean, B^-1 + W^-1)."""
    y = _as_embedding(y, model.dim, "y")
    b = model.between_precision()
    w = model.within_precision()
    zero = torch.zeros(model.dim, dtype=DTYPE)
    single_precision = b + w
    gamma = b @ model.mean + y @ w
    chol = torch.linalg.cholesky(single_precision)
    post_mean = torch.cholesky_solve(gamma.unsqueeze(-1), chol).squeeze(-1)
    return (
        log_gaussian(y, zero, w)
        + log_gaussian(zero, model.mean, b)
        - log_gaussian(zero, post_mean, single_precision)
    )


def log_joint_diff(model: TwoCovarianceModel, y1, y2) -> torch.Tensor:
    """Log joint density under the different-authors hypothesis (factorizes)."""
    return log_evidence(model, y1) + log_evidence(model, y2)


def score_direct(model: TwoCovarianceModel, y1, y2) -> torch.Tensor:
    """Verification log-likelihood ratio evaluated from Gaussian densities.

    Accepts single embeddings of shape (D,) or batches (..., D); returns a
    tensor of the broadcast batch shape.
    """
    y1 = _as_embedding(y1, model.dim, "y1")
    y2 = _as_embedding(y2, model.dim, "y2")
    b = model.between_precision()
    w = model.within_precision()
    b_mean = b @ model.mean

    logdet_b = 2.0 * torch.diagonal(model.raw_between).sum()
    single = b + w
    pair = b + 2.0 * w
    chol_single = torch.linalg.cholesky(single)
    chol_pair = torch.linalg.cholesky(pair)

    gamma_1 = b_mean + y1 @ w
    gamma_2 = b_mean + y2 @ w
    gamma_12 = b_mean + (y1 + y2) @ w

    prior_term = -0.5 * logdet_b + 0.5 * (model.mean * b_mean).sum()
    pair_term = -0.5 * _logdet_from_chol(chol_pair) + 0.5 * _solve_quad(gamma_12, chol_pair)
    single_terms = _logdet_from_chol(chol_single) - 0.5 * (
        _solve_quad(gamma_1, chol_single) + _solve_quad(gamma_2, chol_single)
    )
    return prior_term + pair_term + single_terms


def precompute_score_params(model: TwoCovarianceModel) -> ScoreParams:
    """Coefficients that make the verification score a quadratic form.

    The constant offset is pinned by direct evaluation at (0, 0), which
    makes the quadratic form agree with `score_direct` exactly.
    """
    b = model.between_precision()
    w = model.within_precision()
    cov_one = torch.cholesky_inverse(torch.linalg.cholesky(b + w))
    cov_two = torch.cholesky_inverse(torch.linalg.cholesky(b + 2.0 * w))

    cross = 0.5 * w @ cov_two @ w
    diff = cov_two - cov_one
    self_term = 0.5 * w @ diff @ w
    linear = w @ diff @ (b @ model.mean)
    zero = torch.zeros(model.dim, dtype=DTYPE)
    offset = score_direct(model, zero, zero)
    return ScoreParams(
        cross_coeff=0.5 * (cross + cross.T),
        self_coeff=0.5 * (self_term + self_term.T),
        linear_coeff=linear,
        offset=offset,
        posterior_cov_one=cov_one,
        posterior_cov_two=cov_two,
    )


def score_quadratic(params: ScoreParams, y1, y2) -> torch.Tensor:
    """Verification score via the precomputed quadratic form; batched."""
    dim = params.cross_coeff.shape[0]
    y1 = _as_embedding(y1, dim, "y1")
    y2 = _as_embedding(y2, dim, "y2")
    cross = (y1 * (y2 @ params.cross_coeff)).sum(-1) + (y2 * (y1 @ params.cross_coeff)).sum(-1)
    selfs = (y1 * (y1 @ params.self_coeff)).sum(-1) + (y2 * (y2 @ params.self_coeff)).sum(-1)
    linear = ((y1 + y2) * params.linear_coeff).sum(-1)
    return cross + selfs + linear + params.offset


def same_author_probability(score) -> torch.Tensor:
    """Posterior probability of the same-author hypothesis under equal priors."""
    return torch.sigmoid(torch.as_tensor(score, dtype=DTYPE))


PROBABILITY_FLOOR = 1e-12


def bce_loss(probability, label) -> torch.Tensor:
    """Binary cross entropy, minimized; probabilities clamped away from {0, 1}."""
    p = torch.as_tensor(probability, dtype=DTYPE).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    l = torch.as_tensor(label, dtype=DTYPE)
    return -(l * torch.log(p) + (1.0 - l) * torch.log1p(-p))


def entropy_diagnostics(model: TwoCovarianceModel) -> tuple[float, float]:
    """Log-determinants of the reconstructed covariances (B^-1, W^-1).

    These track between-author and within-author variability during
    training: each equals minus twice the sum of the log-diagonal of the
    corresponding precision factor.
    """
    logdet_b_inv = -2.0 * torch.diagonal(model.raw_between).sum()
    logdet_w_inv = -2.0 * torch.diagonal(model.raw_within).sum()
    return logdet_b_inv.item(), logdet_w_inv.item()


def sample_embeddings(
    model: TwoCovarianceModel,
    n_authors: int,
    docs_per_author: int,
    generator: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Draw author identities and noisy embeddings from the generative model.

    Returns (embeddings, author_index) with one row per document.  Sampling
    from a distribution given by precision L L^T uses x = mean + L^-T z.
    """
    b_factor = model.between_factor().detach()
    w_factor = model.within_factor().detach()
    z_authors = torch.randn((n_authors, model.dim), dtype=DTYPE, generator=generator)
    identities = model.mean.detach() + torch.linalg.solve_triangular(
        b_factor.T, z_authors.T, upper=True
    ).T
    total = n_authors * docs_per_author
    z_noise = torch.randn((total, model.dim), dtype=DTYPE, generator=generator)
    noise = torch.linalg.solve_triangular(w_factor.T, z_noise.T, upper=True).T
    author_index = torch.arange(n_authors).repeat_interleave(docs_per_author)
    embeddings = identities[author_index] + noise
    return embeddings, author_index
