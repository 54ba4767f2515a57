"""Epoch-wise dissolution of the training set into fresh verification pairs.

Instead of training on a fixed list of document pairs, the per-author
document sets are regrouped every epoch: authors contribute their documents
to either a singles group (one document per author) or a pairs group
(even-sized per-author sets), and a sampling loop alternately emits
same-author pairs from the pairs group and different-author pairs from the
singles group, feeding leftovers back until everything is consumed.

All random draws are made over canonically ordered collections (author id,
then document id) with a seeded generator, so a pool and a seed fully
determine the emitted pair sequence.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field

from .corpus import AuthorRecord, PairRecord


@dataclass(frozen=True)
class PairExample:
    """A sampled verification trial: two documents, their fandoms, a label."""

    doc_ids: tuple[str, str]
    fandoms: tuple[str, str]
    label: int


class AuthorPool:
    """Per-author document sets, deduplicated and canonically ordered."""

    def __init__(self, records: list[AuthorRecord]):
        by_author: dict[str, dict[str, AuthorRecord]] = {}
        doc_owner: dict[str, str] = {}
        for record in records:
            if doc_owner.setdefault(record.doc_id, record.author_id) != record.author_id:
                raise ValueError(
                    f"doc {record.doc_id[:12]} appears under two authors; pool must be disjoint"
                )
            by_author.setdefault(record.author_id, {})[record.doc_id] = record
        self.authors: dict[str, list[AuthorRecord]] = {
            author: [docs[doc_id] for doc_id in sorted(docs)]
            for author, docs in sorted(by_author.items())
        }

    def __len__(self) -> int:
        return len(self.authors)

    @property
    def total_docs(self) -> int:
        return sum(len(docs) for docs in self.authors.values())


@dataclass
class GroupState:
    """Sampling state: singles (at most one doc per author) and author sets."""

    singles: list[AuthorRecord] = field(default_factory=list)
    sets: list[list[AuthorRecord]] = field(default_factory=list)


def make_two_groups(pool: AuthorPool, rng: random.Random) -> GroupState:
    """Initial grouping of the pool.

    Single-document authors go to the singles group; even-sized authors go
    to the set group whole; odd-sized authors with three or more documents
    donate one randomly chosen document to the singles group and the even
    remainder to the set group.
    """
    if not len(pool):
        raise ValueError("author pool is empty")
    state = GroupState()
    for author in sorted(pool.authors):
        docs = list(pool.authors[author])
        if len(docs) == 1:
            state.singles.append(docs[0])
        elif len(docs) % 2 == 0:
            state.sets.append(docs)
        else:
            donated = docs.pop(rng.randrange(len(docs)))
            state.singles.append(donated)
            state.sets.append(docs)
    state.singles.sort(key=lambda r: (r.author_id, r.doc_id))
    return state


def clean_after_sampling(
    remainder: list[AuthorRecord], pairs: list[PairExample], state: GroupState
) -> None:
    """Return what is left of an author's set after a draw to the state.

    Two or more remaining documents go back to the set group.  A single
    remaining document pairs up with a same-author document already in the
    singles group when one exists (emitting another same-author pair);
    otherwise it joins the singles group.
    """
    if len(remainder) > 1:
        _insert_set(state, remainder)
        return
    if len(remainder) != 1:
        return
    record = remainder[0]
    for index, other in enumerate(state.singles):
        if other.author_id == record.author_id:
            state.singles.pop(index)
            pairs.append(
                PairExample(
                    doc_ids=(record.doc_id, other.doc_id),
                    fandoms=(record.fandom, other.fandom),
                    label=1,
                )
            )
            return
    _insert_single(state, record)


def _insert_single(state: GroupState, record: AuthorRecord) -> None:
    bisect.insort(state.singles, record, key=lambda r: (r.author_id, r.doc_id))


def _insert_set(state: GroupState, records: list[AuthorRecord]) -> None:
    bisect.insort(state.sets, records, key=lambda s: s[0].author_id)


def _draw_two(records: list[AuthorRecord], rng: random.Random) -> tuple[AuthorRecord, AuthorRecord]:
    i, j = rng.sample(range(len(records)), 2)
    first, second = records[i], records[j]
    for index in sorted((i, j), reverse=True):
        records.pop(index)
    return first, second


def sample_pairs(pool: AuthorPool, seed: int) -> list[PairExample]:
    """One epoch of re-sampled pairs.

    The loop alternates a same-author draw (two documents from one random
    author set) with a different-authors draw (two singles, or one document
    from each of two distinct author sets when fewer than two singles
    remain), and terminates once no author set is left and at most one
    single remains.  Each document is consumed at most once per call.
    """
    rng = random.Random(seed)
    state = make_two_groups(pool, rng)
    pairs: list[PairExample] = []
    budget = pool.total_docs  # every iteration consumes at least one document
    iterations = 0
    while state.sets or len(state.singles) > 1:
        iterations += 1
        if iterations > budget:
            raise RuntimeError("sampling failed to terminate within the document budget")
        if state.sets:
            author_set = state.sets.pop(rng.randrange(len(state.sets)))
            first, second = _draw_two(author_set, rng)
            pairs.append(
                PairExample(
                    doc_ids=(first.doc_id, second.doc_id),
                    fandoms=(first.fandom, second.fandom),
                    label=1,
                )
            )
            clean_after_sampling(author_set, pairs, state)
        if len(state.singles) > 1:
            first, second = _draw_two(state.singles, rng)
            if first.author_id == second.author_id:
                raise RuntimeError("singles group held two documents of one author")
            pairs.append(
                PairExample(
                    doc_ids=(first.doc_id, second.doc_id),
                    fandoms=(first.fandom, second.fandom),
                    label=0,
                )
            )
        elif len(state.sets) > 1:
            first_index, second_index = rng.sample(range(len(state.sets)), 2)
            first_set = state.sets[first_index]
            second_set = state.sets[second_index]
            state.sets = [
                s for k, s in enumerate(state.sets) if k not in (first_index, second_index)
            ]
            first = first_set.pop(rng.randrange(len(first_set)))
            second = second_set.pop(rng.randrange(len(second_set)))
            pairs.append(
                PairExample(
                    doc_ids=(first.doc_id, second.doc_id),
                    fandoms=(first.fandom, second.fandom),
                    label=0,
                )
            )
            clean_after_sampling(first_set, pairs, state)
            clean_after_sampling(second_set, pairs, state)
    return pairs


def examples_to_records(
    examples: list[PairExample], doc_texts: dict[str, str], id_prefix: str
) -> tuple[list[PairRecord], dict[str, bool]]:
    """Materialize sampled pairs in the corpus pair format plus labels."""
    records = []
    labels = {}
    for index, example in enumerate(examples):
        pair_id = f"{id_prefix}-{index:06d}"
        records.append(
            PairRecord(
                id=pair_id,
                fandoms=example.fandoms,
                texts=(doc_texts[example.doc_ids[0]], doc_texts[example.doc_ids[1]]),
            )
        )
        labels[pair_id] = bool(example.label)
    return records, labels
