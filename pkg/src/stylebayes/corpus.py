"""Data model and JSONL ingestion for verification-pair corpora.

File conventions follow the PAN shared-task layout: a pairs file with one
``{"id", "fandoms", "pair"}`` object per line and a truth file with one
``{"id", "same", "authors"}`` object per line.  Document texts are kept
byte-exact apart from Unicode NFC normalization, which is also the notion
of document equality used for leak removal.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import tempfile
import unicodedata
from dataclasses import dataclass
from pathlib import Path


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class PairRecord:
    id: str
    fandoms: tuple[str, str]
    texts: tuple[str, str]


@dataclass(frozen=True)
class TruthRecord:
    id: str
    same: bool
    author_ids: tuple[str, str]


@dataclass(frozen=True)
class AuthorRecord:
    author_id: str
    fandom: str
    doc_id: str


@dataclass(frozen=True)
class DatasetStats:
    n_pairs: int
    n_same: int
    n_different: int
    n_authors: int
    n_fandoms: int


def normalize_text(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def doc_fingerprint(text: str) -> str:
    """Stable document identity: SHA-1 of the NFC-normalized text."""
    return hashlib.sha1(normalize_text(text).encode("utf-8")).hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_line(raw: str, path: str | Path, line_no: int) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise CorpusError(f"{path}:{line_no}: expected a JSON object")
    return obj


def _string_pair(obj: dict, field: str, path, line_no: int) -> tuple[str, str]:
    value = obj.get(field)
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(item, str) for item in value)
    ):
        raise CorpusError(f"{path}:{line_no}: field {field!r} must be a pair of strings")
    return value[0], value[1]


def load_pairs(path: str | Path) -> list[PairRecord]:
    """Read a pairs file; records come back in file order."""
    records: list[PairRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                raise CorpusError(f"{path}:{line_no}: blank line")
            obj = _parse_line(raw, path, line_no)
            pair_id = obj.get("id")
            if not isinstance(pair_id, str) or not pair_id:
                raise CorpusError(f"{path}:{line_no}: missing or empty 'id'")
            if pair_id in seen:
                raise CorpusError(f"{path}:{line_no}: duplicate id {pair_id!r}")
            seen.add(pair_id)
            fandoms = _string_pair(obj, "fandoms", path, line_no)
            texts = _string_pair(obj, "pair", path, line_no)
            records.append(PairRecord(id=pair_id, fandoms=fandoms, texts=texts))
    return records


def save_pairs(
    records: list[PairRecord], path: str | Path, labels: dict[str, bool] | None = None
) -> None:
    """Write pairs JSONL; with `labels`, each line also carries a 'same' flag."""
    lines = []
    for record in records:
        obj = {"id": record.id, "fandoms": list(record.fandoms), "pair": list(record.texts)}
        if labels is not None:
            obj["same"] = bool(labels[record.id])
        lines.append(json.dumps(obj, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_truth(path: str | Path) -> dict[str, TruthRecord]:
    records: dict[str, TruthRecord] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                raise CorpusError(f"{path}:{line_no}: blank line")
            obj = _parse_line(raw, path, line_no)
            pair_id = obj.get("id")
            if not isinstance(pair_id, str) or not pair_id:
                raise CorpusError(f"{path}:{line_no}: missing or empty 'id'")
            if pair_id in records:
                raise CorpusError(f"{path}:{line_no}: duplicate id {pair_id!r}")
            same = obj.get("same")
            if not isinstance(same, bool):
                raise CorpusError(f"{path}:{line_no}: field 'same' must be a boolean")
            authors = _string_pair(obj, "authors", path, line_no)
            if same != (authors[0] == authors[1]):
                raise CorpusError(
                    f"{path}:{line_no}: 'same' flag inconsistent with author ids {authors!r}"
                )
            records[pair_id] = TruthRecord(id=pair_id, same=same, author_ids=authors)
    return records


def save_truth(records: dict[str, TruthRecord], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"id": record.id, "same": record.same, "authors": list(record.author_ids)},
            ensure_ascii=False,
        )
        for record in records.values()
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def split_train_dev(
    pairs: list[PairRecord],
    truth: dict[str, TruthRecord],
    dev_fraction: float,
    seed: int,
) -> tuple[list[PairRecord], list[PairRecord]]:
    """Pair-disjoint split, stratified on the same/different label.

    After the split, any train pair whose either document (NFC-normalized)
    also occurs in a dev pair is dropped, so no document crosses the
    boundary.  Deterministic for a fixed seed; outputs preserve input
    order.
    """
    if not 0.0 < dev_fraction < 1.0:
        raise CorpusError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    missing = [pair.id for pair in pairs if pair.id not in truth]
    if missing:
        raise CorpusError(f"truth file does not cover pair ids: {missing[:5]}")

    rng = random.Random(seed)
    dev_ids: set[str] = set()
    for wanted_label in (True, False):
        group = [pair.id for pair in pairs if truth[pair.id].same == wanted_label]
        rng.shuffle(group)
        n_dev = int(len(group) * dev_fraction + 0.5)
        dev_ids.update(group[:n_dev])

    dev = [pair for pair in pairs if pair.id in dev_ids]
    dev_docs = {normalize_text(text) for pair in dev for text in pair.texts}
    train = [
        pair
        for pair in pairs
        if pair.id not in dev_ids
        and not any(normalize_text(text) in dev_docs for text in pair.texts)
    ]
    return train, dev


def dataset_stats(pairs: list[PairRecord], truth: dict[str, TruthRecord]) -> DatasetStats:
    """Exact counts; label/author counts cover only pairs present in truth."""
    n_same = 0
    n_different = 0
    authors: set[str] = set()
    fandoms: set[str] = set()
    for pair in pairs:
        fandoms.update(pair.fandoms)
        record = truth.get(pair.id)
        if record is None:
            continue
        if record.same:
            n_same += 1
        else:
            n_different += 1
        authors.update(record.author_ids)
    return DatasetStats(
        n_pairs=len(pairs),
        n_same=n_same,
        n_different=n_different,
        n_authors=len(authors),
        n_fandoms=len(fandoms),
    )


def collect_author_records(
    pairs: list[PairRecord], truth: dict[str, TruthRecord]
) -> tuple[list[AuthorRecord], dict[str, str]]:
    """Dissolve labeled pairs into per-document author records.

    Returns the records (deduplicated on (author_id, doc_id)) plus the
    doc_id -> text table needed to materialize sampled pairs later.  A
    document attributed to two different authors is a corpus defect and
    raises.
    """
    records: list[AuthorRecord] = []
    doc_texts: dict[str, str] = {}
    doc_author: dict[str, str] = {}
    seen: set[tuple[str, str]] = set()
    missing = [pair.id for pair in pairs if pair.id not in truth]
    if missing:
        raise CorpusError(f"truth file does not cover pair ids: {missing[:5]}")
    for pair in pairs:
        record = truth[pair.id]
        for side in (0, 1):
            text = normalize_text(pair.texts[side])
            author = record.author_ids[side]
            doc_id = doc_fingerprint(text)
            if doc_author.setdefault(doc_id, author) != author:
                raise CorpusError(
                    f"document {doc_id[:12]} attributed to two authors "
                    f"({doc_author[doc_id]!r} and {author!r})"
                )
            if (author, doc_id) in seen:
                continue
            seen.add((author, doc_id))
            doc_texts[doc_id] = text
            records.append(AuthorRecord(author_id=author, fandom=pair.fandoms[side], doc_id=doc_id))
    return records, doc_texts
