"""Hierarchical document encoder producing fixed-size style embeddings.

A document arrives as a list of sentence-like units.  Each word position
fuses a token embedding with a character-level encoding (the final state
of a small recurrence over the character embeddings), so rare or masked
tokens still contribute their spelling.  A bidirectional recurrent tier
with additive attention turns word positions into unit embeddings, a
second tier turns unit embeddings into a document embedding, and a dense
output layer fixes the embedding dimension.  Position 0 of every unit is
the topical prefix: its token row is looked up from the prefix slot of the
vocabulary and its characters are those of the cleaned fandom label.

Everything runs in float64 on CPU; evaluation mode is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .preprocess import SentenceUnit, Vocabulary, fandom_prefix_embedding, UNK_TOKEN

DTYPE = torch.float64


@dataclass(frozen=True)
class EncoderConfig:
    char_emb_dim: int = 8
    token_emb_dim: int = 16
    word_rnn_dim: int = 16
    sent_rnn_dim: int = 16
    lev_dim: int = 8
    dropout: float = 0.1

    def validate(self) -> list[str]:
        problems = []
        for name in ("char_emb_dim", "token_emb_dim", "word_rnn_dim", "sent_rnn_dim", "lev_dim"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout must be in [0, 1), got {self.dropout}")
        return problems


def _glorot(n_in: int, n_out: int, generator: torch.Generator) -> torch.Tensor:
    limit = math.sqrt(6.0 / (n_in + n_out))
    return torch.empty(n_in, n_out, dtype=DTYPE).uniform_(-limit, limit, generator=generator)


class _Lstm(torch.nn.Module):
    """Plain LSTM over padded sequences with per-step validity masking.

    Gate weights are stored fused as [input, 4 * hidden] in i, f, g, o
    order; masked steps leave the state untouched, so padding never leaks
    into the final states.
    """

    def __init__(self, n_in: int, n_hidden: int, generator: torch.Generator):
        super().__init__()
        self.n_hidden = n_hidden
        self.w_x = torch.nn.Parameter(
            torch.cat([_glorot(n_in, n_hidden, generator) for _ in range(4)], dim=1)
        )
        self.w_h = torch.nn.Parameter(
            torch.cat([_glorot(n_hidden, n_hidden, generator) for _ in range(4)], dim=1)
        )
        self.bias = torch.nn.Parameter(torch.zeros(4 * n_hidden, dtype=DTYPE))

    def forward(self, inputs: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """inputs [B, T, n_in], mask [B, T] -> hidden states [B, T, n_hidden]."""
        n_batch, n_steps, _ = inputs.shape
        h = torch.zeros(n_batch, self.n_hidden, dtype=DTYPE)
        c = torch.zeros(n_batch, self.n_hidden, dtype=DTYPE)
        states = []
        for t in range(n_steps):
            gates = inputs[:, t, :] @ self.w_x + h @ self.w_h + self.bias
            i, f, g, o = torch.split(gates, self.n_hidden, dim=1)
            c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            h_new = torch.sigmoid(o) * torch.tanh(c_new)
            step = mask[:, t].unsqueeze(1).to(DTYPE)
            h = step * h_new + (1.0 - step) * h
            c = step * c_new + (1.0 - step) * c
            states.append(h)
        return torch.stack(states, dim=1)


def _reverse_by_length(x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Reverse the valid prefix of each row of [B, T, ...] along T."""
    n_batch, n_steps = x.shape[0], x.shape[1]
    positions = torch.arange(n_steps).expand(n_batch, n_steps)
    reversed_idx = lengths.unsqueeze(1) - 1 - positions
    idx = torch.where(reversed_idx >= 0, reversed_idx, positions)
    expand = idx.view(n_batch, n_steps, *([1] * (x.ndim - 2))).expand_as(x)
    return torch.gather(x, 1, expand)


class _BiLstm(torch.nn.Module):
    def __init__(self, n_in: int, n_hidden: int, generator: torch.Generator):
        super().__init__()
        self.fwd = _Lstm(n_in, n_hidden, generator)
        self.bwd = _Lstm(n_in, n_hidden, generator)

    def forward(self, inputs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        mask = torch.arange(inputs.shape[1]).unsqueeze(0) < lengths.clamp(min=1).unsqueeze(1)
        forward_states = self.fwd(inputs, mask)
        flipped = _reverse_by_length(inputs, lengths)
        backward_states = _reverse_by_length(self.bwd(flipped, mask), lengths)
        return torch.cat([forward_states, backward_states], dim=2)


class _AdditiveAttention(torch.nn.Module):
    """Scores tanh(h W + b) v with a masked softmax over time."""

    def __init__(self, n_in: int, n_hidden: int, generator: torch.Generator):
        super().__init__()
        self.weight = torch.nn.Parameter(_glorot(n_in, n_hidden, generator))
        self.bias = torch.nn.Parameter(torch.zeros(n_hidden, dtype=DTYPE))
        self.score = torch.nn.Parameter(_glorot(n_hidden, 1, generator))

    def forward(
        self, states: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        scores = (torch.tanh(states @ self.weight + self.bias) @ self.score).squeeze(-1)
        scores = scores.masked_fill(~mask, -torch.inf)
        weights = torch.softmax(scores, dim=-1)
        return torch.einsum("bt,bth->bh", weights, states), weights


@dataclass
class EncodedBatch:
    """Padded id tensors for a batch of documents."""

    token_ids: torch.Tensor  # [B, S, W] long
    char_ids: torch.Tensor  # [B, S, W, C] long
    char_lengths: torch.Tensor  # [B, S, W] long
    word_lengths: torch.Tensor  # [B, S] long
    unit_counts: torch.Tensor  # [B] long


@dataclass
class AttentionTrace:
    """Per-unit word weights and per-document unit weights; each group sums to 1."""

    word_weights: list[np.ndarray]
    sentence_weights: np.ndarray


def collate(docs: list[list[SentenceUnit]], vocab: Vocabulary) -> EncodedBatch:
    """Pad a batch of unit lists into id tensors, prepending the prefix position."""
    if not docs or any(not units for units in docs):
        raise ValueError("every document must contribute at least one unit")
    prepared = []
    for units in docs:
        doc_rows = []
        for unit in units:
            token_ids = [vocab.prefix_id(unit.prefix), *unit.token_ids]
            char_ids = [vocab.prefix_char_ids(unit.prefix), *unit.char_ids]
            doc_rows.append((token_ids, char_ids))
        prepared.append(doc_rows)

    n_units = max(len(rows) for rows in prepared)
    n_words = max(len(t) for rows in prepared for t, _ in rows)
    n_chars = max(max((len(cs) for _, chars in rows for cs in chars), default=1) for rows in prepared)
    n_chars = max(n_chars, 1)

    shape = (len(docs), n_units, n_words)
    token_ids = torch.zeros(shape, dtype=torch.long)
    char_ids = torch.zeros((*shape, n_chars), dtype=torch.long)
    char_lengths = torch.zeros(shape, dtype=torch.long)
    word_lengths = torch.zeros(shape[:2], dtype=torch.long)
    unit_counts = torch.zeros(len(docs), dtype=torch.long)

    for b, rows in enumerate(prepared):
        unit_counts[b] = len(rows)
        for s, (tokens, chars) in enumerate(rows):
            word_lengths[b, s] = len(tokens)
            token_ids[b, s, : len(tokens)] = torch.tensor(tokens, dtype=torch.long)
            for w, char_seq in enumerate(chars):
                char_lengths[b, s, w] = len(char_seq)
                if char_seq:
                    char_ids[b, s, w, : len(char_seq)] = torch.tensor(char_seq, dtype=torch.long)

    n_rows = vocab.n_token_rows
    if int(token_ids.max()) >= n_rows or int(char_ids.max()) >= vocab.n_char_rows:
        raise ValueError("id out of range for the given vocabulary")
    return EncodedBatch(token_ids, char_ids, char_lengths, word_lengths, unit_counts)


class DocumentEncoder(torch.nn.Module):
    """Maps batches of sentence-like units to style embedding vectors."""

    def __init__(self, config: EncoderConfig, vocab: Vocabulary, seed: int = 0):
        super().__init__()
        problems = config.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.config = config
        self.n_regular_tokens = len(vocab.token_to_id)
        generator = torch.Generator().manual_seed(seed)

        def embedding(n_rows: int, dim: int) -> torch.nn.Parameter:
            scale = math.sqrt(3.0 / dim)
            table = torch.empty(n_rows, dim, dtype=DTYPE).uniform_(
                -scale, scale, generator=generator
            )
            return torch.nn.Parameter(table)

        self.token_emb = embedding(vocab.n_token_rows, config.token_emb_dim)
        self.char_emb = embedding(vocab.n_char_rows, config.char_emb_dim)
        self.char_rnn = _Lstm(config.char_emb_dim, config.char_emb_dim, generator)
        word_in = config.token_emb_dim + config.char_emb_dim
        self.word_rnn = _BiLstm(word_in, config.word_rnn_dim, generator)
        self.word_attn = _AdditiveAttention(
            2 * config.word_rnn_dim, config.word_rnn_dim, generator
        )
        self.sent_rnn = _BiLstm(2 * config.word_rnn_dim, config.sent_rnn_dim, generator)
        self.sent_attn = _AdditiveAttention(
            2 * config.sent_rnn_dim, config.sent_rnn_dim, generator
        )
        self.out_weight = torch.nn.Parameter(
            _glorot(2 * config.sent_rnn_dim, config.lev_dim, generator)
        )
        self.out_bias = torch.nn.Parameter(torch.zeros(config.lev_dim, dtype=DTYPE))
        self._init_prefix_rows(vocab)

    def _init_prefix_rows(self, vocab: Vocabulary) -> None:
        """Prefix slots start as the average of their fandom-token embeddings."""
        if not vocab.prefix_to_id:
            return

        def lookup(token: str) -> np.ndarray:
            return self.token_emb[vocab.token_id(token)].detach().numpy()

        with torch.no_grad():
            for name, row in vocab.prefix_to_id.items():
                fandom = name[1:-1]  # strip the <...> decoration
                vector = fandom_prefix_embedding(fandom, lookup)
                self.token_emb[row] = torch.as_tensor(vector, dtype=DTYPE)

    def forward(
        self, batch: EncodedBatch, training: bool = False
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (embeddings [B, D], word weights [B, S, W], unit weights [B, S])."""
        n_batch, n_units, n_words = batch.token_ids.shape
        n_chars = batch.char_ids.shape[3]
        p_drop = self.config.dropout if training else 0.0

        # characters -> word-level spelling encodings
        char_rows = self.char_emb[batch.char_ids.view(-1, n_chars)]
        char_len = batch.char_lengths.view(-1)
        char_mask = torch.arange(n_chars).unsqueeze(0) < char_len.clamp(min=1).unsqueeze(1)
        char_states = self.char_rnn(char_rows, char_mask)
        final_idx = (char_len.clamp(min=1) - 1).view(-1, 1, 1)
        spelling = char_states.gather(
            1, final_idx.expand(-1, 1, self.config.char_emb_dim)
        ).squeeze(1)
        spelling = spelling * (char_len > 0).to(DTYPE).unsqueeze(1)
        spelling = spelling.view(n_batch, n_units, n_words, -1)

        fused = torch.cat([self.token_emb[batch.token_ids], spelling], dim=3)
        fused = F.dropout(fused, p=p_drop, training=training)

        # word tier: one row per unit
        word_inputs = fused.view(n_batch * n_units, n_words, -1)
        word_len = batch.word_lengths.view(-1)
        word_states = self.word_rnn(word_inputs, word_len)
        word_mask = torch.arange(n_words).unsqueeze(0) < word_len.clamp(min=1).unsqueeze(1)
        unit_emb, word_weights = self.word_attn(word_states, word_mask)
        unit_valid = (word_len > 0).to(DTYPE).unsqueeze(1)
        unit_emb = (unit_emb * unit_valid).view(n_batch, n_units, -1)
        unit_emb = F.dropout(unit_emb, p=p_drop, training=training)

        # sentence tier: one row per document
        sent_states = self.sent_rnn(unit_emb, batch.unit_counts)
        sent_mask = torch.arange(n_units).unsqueeze(0) < batch.unit_counts.unsqueeze(1)
        doc_emb, sent_weights = self.sent_attn(sent_states, sent_mask)
        doc_emb = F.dropout(doc_emb, p=p_drop, training=training)

        levs = doc_emb @ self.out_weight + self.out_bias
        return levs, word_weights.view(n_batch, n_units, n_words), sent_weights


def encode_document(
    units: list[SentenceUnit],
    encoder: DocumentEncoder,
    vocab: Vocabulary,
    mode: str = "eval",
) -> tuple[np.ndarray, AttentionTrace]:
    """Encode one document; eval mode is deterministic (no dropout)."""
    if not units:
        raise ValueError("cannot encode an empty document")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    batch = collate([units], vocab)
    training = mode == "train"
    with torch.set_grad_enabled(training):
        levs, word_weights, sent_weights = encoder(batch, training=training)
    lengths = batch.word_lengths[0]
    trace = AttentionTrace(
        word_weights=[
            word_weights[0, s, : int(lengths[s])].detach().numpy() for s in range(len(units))
        ],
        sentence_weights=sent_weights[0, : len(units)].detach().numpy(),
    )
    return levs[0].detach().numpy(), trace


def lev_distance(y1, y2) -> torch.Tensor:
    """Squared Euclidean distance between embeddings; batched over leading dims."""
    t1 = torch.as_tensor(y1, dtype=DTYPE)
    t2 = torch.as_tensor(y2, dtype=DTYPE)
    if t1.shape[-1] != t2.shape[-1]:
        raise ValueError(f"dimension mismatch: {t1.shape[-1]} vs {t2.shape[-1]}")
    return ((t1 - t2) ** 2).sum(-1)


def contrastive_loss(y1, y2, label, tau_s: float, tau_d: float) -> torch.Tensor:
    """Dual-threshold squared hinge on the squared embedding distance.

    Same-author pairs (label 1) are pushed below tau_s, different-author
    pairs (label 0) above tau_d.
    """
    if not tau_s < tau_d:
        raise ValueError(f"tau_s must be < tau_d, got {tau_s} >= {tau_d}")
    distance = lev_distance(y1, y2)
    label = torch.as_tensor(label, dtype=DTYPE)
    same_term = torch.clamp(distance - tau_s, min=0.0) ** 2
    diff_term = torch.clamp(tau_d - distance, min=0.0) ** 2
    return label * same_term + (1.0 - label) * diff_term


def decision_threshold(tau_s: float, tau_d: float) -> float:
    """Midpoint distance threshold between the two contrastive margins."""
    if not tau_s < tau_d:
        raise ValueError(f"tau_s must be < tau_d, got {tau_s} >= {tau_d}")
    return 0.5 * (tau_s + tau_d)


def metric_decision(distance: float, tau_s: float, tau_d: float) -> float:
    """Distance-based verdict: 1.0 same, 0.0 different, 0.5 at the exact threshold."""
    threshold = decision_threshold(tau_s, tau_d)
    if distance < threshold:
        return 1.0
    if distance > threshold:
        return 0.0
    return 0.5
