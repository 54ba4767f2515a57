"""Tokenization, vocabulary with rare-type masking, and sliding-window units.

Tokenization is whitespace splitting with boundary punctuation detached
into standalone tokens (runs of the same punctuation character, e.g. an
ellipsis, stay together).  There is deliberately no sentence boundary
detection: documents are cut into overlapping sentence-like units by a
sliding window, and every unit carries a topical prefix pseudo-token
derived from its fandom label.

Rare token and character types are masked to an unknown symbol to keep
the model from keying on topical vocabulary; a masked token still exposes
its true character sequence.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .corpus import atomic_write_text

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
PAD_ID = 0
UNK_ID = 1
_N_RESERVED = 2

VOCAB_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PreprocessConfig:
    hop_length: int = 16
    overlapping_length: int = 4
    max_tokens: int = 5000
    max_chars: int = 150
    min_freq: int = 2

    def validate(self) -> list[str]:
        problems = []
        if self.hop_length < 1:
            problems.append(f"hop_length must be >= 1, got {self.hop_length}")
        if self.overlapping_length < 0:
            problems.append(f"overlapping_length must be >= 0, got {self.overlapping_length}")
        if self.max_tokens < _N_RESERVED:
            problems.append(f"max_tokens must be >= {_N_RESERVED}, got {self.max_tokens}")
        if self.max_chars < _N_RESERVED:
            problems.append(f"max_chars must be >= {_N_RESERVED}, got {self.max_chars}")
        if self.min_freq < 1:
            problems.append(f"min_freq must be >= 1, got {self.min_freq}")
        return problems


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _take_run(chunk: str, from_left: bool) -> tuple[str, str]:
    """Split off the maximal run of one punctuation character from an end."""
    if from_left:
        ch = chunk[0]
        i = 1
        while i < len(chunk) and chunk[i] == ch:
            i += 1
        return chunk[:i], chunk[i:]
    ch = chunk[-1]
    i = len(chunk) - 1
    while i > 0 and chunk[i - 1] == ch:
        i -= 1
    return chunk[i:], chunk[:i]


def tokenize(text: str) -> list[str]:
    """Whitespace split with boundary punctuation detached as own tokens.

    Internal punctuation (hyphens, apostrophes inside a word) stays
    attached, so joining the tokens with spaces and re-tokenizing is the
    identity.
    """
    tokens: list[str] = []
    for chunk in text.split():
        left: list[str] = []
        right: list[str] = []
        while chunk and _is_punct(chunk[0]):
            run, chunk = _take_run(chunk, from_left=True)
            left.append(run)
        while chunk and _is_punct(chunk[-1]):
            run, chunk = _take_run(chunk, from_left=False)
            right.append(run)
        tokens.extend(left)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(right))
    return tokens


def prefix_token(fandom: str) -> str:
    """Pseudo-token under which a fandom prefix lives in the vocabulary."""
    return f"<{fandom}>"


def clean_fandom(fandom: str) -> str:
    """Fandom label with all non-ASCII characters removed."""
    return fandom.encode("ascii", "ignore").decode("ascii")


@dataclass
class Vocabulary:
    """Frozen token/character id maps with reserved PAD and UNK slots.

    Regular token ids are assigned by descending frequency (ties broken
    lexicographically) after the reserved ids; prefix slots for known
    fandom labels follow after the regular tokens and do not count against
    the token budget.
    """

    token_to_id: dict[str, int]
    char_to_id: dict[str, int]
    token_budget: int
    char_budget: int
    token_freq: dict[str, int] = field(default_factory=dict)
    char_freq: dict[str, int] = field(default_factory=dict)
    prefix_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def n_token_rows(self) -> int:
        return len(self.token_to_id) + len(self.prefix_to_id)

    @property
    def n_char_rows(self) -> int:
        return len(self.char_to_id)

    def token_id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, UNK_ID)

    def encode_chars(self, token: str) -> tuple[int, ...]:
        return tuple(self.char_to_id.get(ch, UNK_ID) for ch in token)

    def prefix_id(self, fandom: str) -> int:
        return self.prefix_to_id.get(prefix_token(fandom), UNK_ID)

    def prefix_char_ids(self, fandom: str) -> tuple[int, ...]:
        cleaned = clean_fandom(fandom)
        return self.encode_chars(cleaned) if cleaned else (UNK_ID,)

    def to_payload(self) -> dict:
        """JSON-ready form, serialization order fixed by id."""
        return {
            "version": VOCAB_FORMAT_VERSION,
            "token_budget": self.token_budget,
            "char_budget": self.char_budget,
            "tokens": sorted(
                ([tok, idx, self.token_freq.get(tok, 0)] for tok, idx in self.token_to_id.items()),
                key=lambda item: item[1],
            ),
            "chars": sorted(
                ([ch, idx, self.char_freq.get(ch, 0)] for ch, idx in self.char_to_id.items()),
                key=lambda item: item[1],
            ),
            "prefixes": sorted(([name, idx] for name, idx in self.prefix_to_id.items()),
                               key=lambda item: item[1]),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Vocabulary":
        if payload.get("version") != VOCAB_FORMAT_VERSION:
            raise ValueError(f"unsupported vocabulary version {payload.get('version')!r}")
        return cls(
            token_to_id={tok: idx for tok, idx, _ in payload["tokens"]},
            char_to_id={ch: idx for ch, idx, _ in payload["chars"]},
            token_budget=payload["token_budget"],
            char_budget=payload["char_budget"],
            token_freq={tok: freq for tok, _, freq in payload["tokens"] if freq},
            char_freq={ch: freq for ch, _, freq in payload["chars"] if freq},
            prefix_to_id={name: idx for name, idx in payload["prefixes"]},
        )

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_payload(), ensure_ascii=False, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_payload(json.loads(Path(path).read_text(encoding="utf-8")))


def _select(counts: Counter, budget: int, min_freq: int) -> list[str]:
    eligible = [item for item, freq in counts.items() if freq >= min_freq]
    eligible.sort(key=lambda item: (-counts[item], item))
    return eligible[: budget - _N_RESERVED]


def build_vocab(
    token_stream: Iterable[str],
    max_tokens: int,
    max_chars: int,
    min_freq: int,
    fandoms: Iterable[str] = (),
) -> Vocabulary:
    """Keep the most frequent token/character types; everything else masks to UNK.

    `fandoms` allocates one prefix slot per distinct label beyond the
    token budget.
    """
    if max_tokens < _N_RESERVED or max_chars < _N_RESERVED:
        raise ValueError(f"budgets must be >= {_N_RESERVED} (reserved PAD and UNK)")
    token_counts: Counter = Counter()
    char_counts: Counter = Counter()
    for token in token_stream:
        token_counts[token] += 1
        char_counts.update(token)

    token_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for token in _select(token_counts, max_tokens, min_freq):
        token_to_id[token] = len(token_to_id)
    char_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for ch in _select(char_counts, max_chars, min_freq):
        char_to_id[ch] = len(char_to_id)

    prefix_to_id = {}
    next_id = len(token_to_id)
    for fandom in sorted(set(fandoms)):
        prefix_to_id[prefix_token(fandom)] = next_id
        next_id += 1

    return Vocabulary(
        token_to_id=token_to_id,
        char_to_id=char_to_id,
        token_budget=max_tokens,
        char_budget=max_chars,
        token_freq={tok: token_counts[tok] for tok in token_to_id if tok in token_counts},
        char_freq={ch: char_counts[ch] for ch in char_to_id if ch in char_counts},
        prefix_to_id=prefix_to_id,
    )


def mask(tokens: list[str], vocab: Vocabulary) -> tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]:
    """Token ids with out-of-vocabulary types mapped to UNK.

    Character ids always reflect the true spelling (rare characters map to
    the character UNK), so a masked token keeps its character encoding.
    """
    token_ids = tuple(vocab.token_id(token) for token in tokens)
    char_ids = tuple(vocab.encode_chars(token) for token in tokens)
    return token_ids, char_ids


@dataclass(frozen=True)
class SentenceUnit:
    """One sliding-window unit: a topical prefix plus an ordered token span."""

    prefix: str
    tokens: tuple[str, ...]
    token_ids: tuple[int, ...] = ()
    char_ids: tuple[tuple[int, ...], ...] = ()


def sliding_windows(
    tokens: list[str], hop_length: int, overlapping_length: int, fandom: str
) -> list[SentenceUnit]:
    """Cut a token sequence into overlapping units of hop + overlap tokens.

    Window k starts at k * hop_length; generation stops with the first
    window that reaches the end of the sequence (a trailing window that
    would add no unseen token is never emitted).  Every unit carries the
    fandom prefix; token ids are filled in separately by masking.
    """
    if hop_length < 1:
        raise ValueError(f"hop_length must be >= 1, got {hop_length}")
    if overlapping_length < 0:
        raise ValueError(f"overlapping_length must be >= 0, got {overlapping_length}")
    units: list[SentenceUnit] = []
    width = hop_length + overlapping_length
    start = 0
    while start < len(tokens):
        window = tokens[start : start + width]
        units.append(SentenceUnit(prefix=fandom, tokens=tuple(window)))
        if start + width >= len(tokens):
            break
        start += hop_length
    return units


def document_units(
    text: str, fandom: str, vocab: Vocabulary, config: PreprocessConfig
) -> list[SentenceUnit]:
    """Full preprocessing of one document: tokenize, window, mask."""
    tokens = tokenize(text)
    units = sliding_windows(tokens, config.hop_length, config.overlapping_length, fandom)
    prepared = []
    for unit in units:
        token_ids, char_ids = mask(list(unit.tokens), vocab)
        prepared.append(replace(unit, token_ids=token_ids, char_ids=char_ids))
    return prepared


def fandom_prefix_embedding(
    fandom: str, token_embedding_lookup: Callable[[str], np.ndarray]
) -> np.ndarray:
    """Initial embedding of a fandom prefix.

    Non-ASCII characters are removed, the cleaned label is tokenized, and
    the constituent token embeddings are averaged.  The lookup callable
    must resolve out-of-vocabulary tokens itself (normally to the UNK
    embedding); a label that is empty after cleaning gets the UNK
    embedding.
    """
    tokens = tokenize(clean_fandom(fandom))
    if not tokens:
        return np.asarray(token_embedding_lookup(UNK_TOKEN), dtype=float)
    vectors = [np.asarray(token_embedding_lookup(token), dtype=float) for token in tokens]
    return np.mean(vectors, axis=0)


def iter_corpus_tokens(texts: Iterable[str]) -> Iterable[str]:
    for text in texts:
        yield from tokenize(text)
