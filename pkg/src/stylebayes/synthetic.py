"""Synthetic verification corpus with author-specific token distributions.

Each synthetic author owns a small set of signature pseudo-words, personal
function-word preferences, and punctuation habits; each document also
mixes in topic words tied to its fandom label, so the corpus carries both
an authorship signal and a topical confound.  Author sets are split
author-disjointly into train/dev/test parts, and the dev/test parts are
materialized into balanced verification pairs with ground truth.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import AuthorRecord, PairRecord, TruthRecord, doc_fingerprint
from .resample import AuthorPool, examples_to_records, sample_pairs

_FUNCTION_WORDS = (
    "the a an and or but to of in on at as it he she they we you was were is are "
    "had has have with for from not this that there then when while his her its "
    "their be been so if because into over under again very just more some"
).split()

_END_PUNCT = [".", "!", "?", "..."]

_CONSONANTS = "btdkgmnprsvlzf"
_VOWELS = "aeiou"


def _pseudo_word(rng: random.Random, n_syllables: int) -> str:
    return "".join(
        rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(n_syllables)
    )


def _lexicon(rng: random.Random, size: int) -> list[str]:
    words = set()
    while len(words) < size:
        words.add(_pseudo_word(rng, rng.randint(2, 4)))
    return sorted(words)


@dataclass
class SyntheticSplit:
    pairs: list[PairRecord]
    truth: dict[str, TruthRecord]


@dataclass
class SyntheticCorpus:
    train: SyntheticSplit
    dev: SyntheticSplit
    test: SyntheticSplit
    fandoms: list[str]


@dataclass
class _AuthorStyle:
    signature: list[str]
    function_weights: list[float]
    end_punct: str
    comma_rate: float
    signature_rate: float


def _make_style(rng: random.Random, signature_pool: list[str]) -> _AuthorStyle:
    return _AuthorStyle(
        signature=rng.sample(signature_pool, 6),
        function_weights=[rng.uniform(0.2, 1.0) for _ in _FUNCTION_WORDS],
        end_punct=rng.choice(_END_PUNCT),
        comma_rate=rng.uniform(0.02, 0.12),
        signature_rate=rng.uniform(0.30, 0.45),
    )


def _compose_document(
    rng: random.Random,
    style: _AuthorStyle,
    topic_words: list[str],
    n_tokens: int,
) -> str:
    words: list[str] = []
    sentence_len = 0
    target_len = rng.randint(6, 14)
    while len(words) < n_tokens:
        roll = rng.random()
        if roll < style.signature_rate:
            word = rng.choice(style.signature)
        elif roll < style.signature_rate + 0.12:
            word = rng.choice(topic_words)
        else:
            word = rng.choices(_FUNCTION_WORDS, weights=style.function_weights)[0]
        sentence_len += 1
        if sentence_len >= target_len:
            words.append(word + style.end_punct)
            sentence_len = 0
            target_len = rng.randint(6, 14)
        elif rng.random() < style.comma_rate:
            words.append(word + ",")
        else:
            words.append(word)
    return " ".join(words)


def generate_authors(
    n_authors: int = 100,
    docs_per_author: tuple[int, int] = (2, 4),
    tokens_per_doc: int = 500,
    n_fandoms: int = 8,
    seed: int = 0,
) -> tuple[dict[str, list[tuple[str, str]]], list[str]]:
    """Returns author_id -> [(text, fandom), ...] plus the fandom labels."""
    rng = random.Random(seed)
    signature_pool = _lexicon(rng, 12 * n_authors)
    fandoms = [f"{_pseudo_word(rng, 2).capitalize()} {_pseudo_word(rng, 2).capitalize()}"
               for _ in range(n_fandoms)]
    topic_lexicons = {fandom: _lexicon(rng, 30) for fandom in fandoms}

    authors: dict[str, list[tuple[str, str]]] = {}
    for index in range(n_authors):
        author_id = f"author-{index:04d}"
        style = _make_style(rng, signature_pool)
        own_fandoms = rng.sample(fandoms, rng.randint(1, 2))
        docs = []
        for _ in range(rng.randint(*docs_per_author)):
            fandom = rng.choice(own_fandoms)
            text = _compose_document(rng, style, topic_lexicons[fandom], tokens_per_doc)
            docs.append((text, fandom))
        authors[author_id] = docs
    return authors, fandoms


def _split_to_pairs(
    authors: dict[str, list[tuple[str, str]]],
    author_ids: list[str],
    seed: int,
    id_prefix: str,
    n_rounds: int = 1,
) -> SyntheticSplit:
    """Materialize pairs by sampling; extra rounds reuse documents across rounds."""
    records = []
    doc_texts = {}
    doc_author = {}
    for author_id in author_ids:
        for text, fandom in authors[author_id]:
            doc_id = doc_fingerprint(text)
            records.append(AuthorRecord(author_id=author_id, fandom=fandom, doc_id=doc_id))
            doc_texts[doc_id] = text
            doc_author[doc_id] = author_id
    pool = AuthorPool(records)
    pairs: list[PairRecord] = []
    truth: dict[str, TruthRecord] = {}
    for round_index in range(n_rounds):
        examples = sample_pairs(pool, seed=seed + round_index)
        prefix = id_prefix if n_rounds == 1 else f"{id_prefix}-r{round_index}"
        pair_records, labels = examples_to_records(examples, doc_texts, prefix)
        for record, example in zip(pair_records, examples):
            pairs.append(record)
            truth[record.id] = TruthRecord(
                id=record.id,
                same=labels[record.id],
                author_ids=(doc_author[example.doc_ids[0]], doc_author[example.doc_ids[1]]),
            )
    return SyntheticSplit(pairs=pairs, truth=truth)


def generate_corpus(
    n_authors: int = 100,
    docs_per_author: tuple[int, int] = (2, 4),
    tokens_per_doc: int = 500,
    n_fandoms: int = 8,
    seed: int = 0,
    dev_fraction: float = 0.1,
    test_fraction: float = 0.1,
) -> SyntheticCorpus:
    """Author-disjoint train/dev/test splits, each materialized as labeled pairs."""
    authors, fandoms = generate_authors(
        n_authors, docs_per_author, tokens_per_doc, n_fandoms, seed
    )
    ids = sorted(authors)
    rng = random.Random(seed + 1)
    rng.shuffle(ids)
    n_dev = max(2, int(len(ids) * dev_fraction))
    n_test = max(2, int(len(ids) * test_fraction))
    dev_ids = ids[:n_dev]
    test_ids = ids[n_dev : n_dev + n_test]
    train_ids = ids[n_dev + n_test :]
    return SyntheticCorpus(
        train=_split_to_pairs(authors, train_ids, seed + 2, "train"),
        dev=_split_to_pairs(authors, dev_ids, seed + 100, "dev", n_rounds=3),
        test=_split_to_pairs(authors, test_ids, seed + 200, "test", n_rounds=3),
        fandoms=fandoms,
    )
