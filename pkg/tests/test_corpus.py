import json

import pytest

from stylebayes.corpus import (
    CorpusError,
    PairRecord,
    TruthRecord,
    collect_author_records,
    dataset_stats,
    doc_fingerprint,
    load_pairs,
    load_truth,
    save_pairs,
    save_truth,
    split_train_dev,
)


def write_lines(path, objects):
    path.write_text("\n".join(json.dumps(obj) for obj in objects) + "\n", encoding="utf-8")


def make_pair(pair_id, text_a, text_b, fandom_a="f1", fandom_b="f2"):
    return {"id": pair_id, "fandoms": [fandom_a, fandom_b], "pair": [text_a, text_b]}


class TestLoadPairs:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text("")
        assert load_pairs(path) == []

    def test_single_record_roundtrip(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_lines(path, [make_pair("p1", "alpha text", "beta text")])
        records = load_pairs(path)
        assert len(records) == 1
        assert records[0].id == "p1"
        assert records[0].texts == ("alpha text", "beta text")
        assert records[0].fandoms == ("f1", "f2")

    def test_missing_pair_field_names_line(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_lines(
            path,
            [make_pair("p1", "a", "b"), {"id": "p2", "fandoms": ["x", "y"]}],
        )
        with pytest.raises(CorpusError, match=r":2:.*'pair'"):
            load_pairs(path)

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text(json.dumps(make_pair("p1", "a", "b")) + "\n{oops\n")
        with pytest.raises(CorpusError, match=":2:"):
            load_pairs(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_lines(path, [make_pair("p1", "a", "b"), make_pair("p1", "c", "d")])
        with pytest.raises(CorpusError, match="duplicate id"):
            load_pairs(path)

    def test_save_load_identity(self, tmp_path):
        records = [
            PairRecord(id="p1", fandoms=("f1", "f2"), texts=("Ünïcode ø", "two\nlines")),
            PairRecord(id="p2", fandoms=("g", "g"), texts=("x", "y")),
        ]
        path = tmp_path / "pairs.jsonl"
        save_pairs(records, path)
        assert load_pairs(path) == records


class TestLoadTruth:
    def test_consistent_same_author(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        write_lines(path, [{"id": "p1", "same": True, "authors": ["a", "a"]}])
        truth = load_truth(path)
        assert truth["p1"].same is True
        assert truth["p1"].author_ids == ("a", "a")

    def test_inconsistent_flag_raises(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        write_lines(path, [{"id": "p1", "same": True, "authors": ["a", "b"]}])
        with pytest.raises(CorpusError, match="inconsistent"):
            load_truth(path)

    def test_three_line_fixture(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        write_lines(
            path,
            [
                {"id": "p1", "same": True, "authors": ["a", "a"]},
                {"id": "p2", "same": False, "authors": ["a", "b"]},
                {"id": "p3", "same": False, "authors": ["c", "d"]},
            ],
        )
        assert len(load_truth(path)) == 3

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "truth.jsonl"
        write_lines(
            path,
            [
                {"id": "p1", "same": True, "authors": ["a", "a"]},
                {"id": "p1", "same": False, "authors": ["a", "b"]},
            ],
        )
        with pytest.raises(CorpusError, match="duplicate id"):
            load_truth(path)

    def test_save_roundtrip(self, tmp_path):
        truth = {
            "p1": TruthRecord(id="p1", same=True, author_ids=("a", "a")),
            "p2": TruthRecord(id="p2", same=False, author_ids=("a", "b")),
        }
        path = tmp_path / "truth.jsonl"
        save_truth(truth, path)
        assert load_truth(path) == truth


def ten_pair_fixture():
    pairs = []
    truth = {}
    for i in range(10):
        same = i < 5
        pairs.append(
            PairRecord(
                id=f"p{i}",
                fandoms=("f-a", "f-b"),
                texts=(f"document {i} left", f"document {i} right"),
            )
        )
        authors = (f"a{i}", f"a{i}") if same else (f"a{i}", f"b{i}")
        truth[f"p{i}"] = TruthRecord(id=f"p{i}", same=same, author_ids=authors)
    return pairs, truth


class TestSplit:
    def test_fraction_and_stratification(self):
        pairs, truth = ten_pair_fixture()
        train, dev = split_train_dev(pairs, truth, dev_fraction=0.2, seed=11)
        assert len(train) == 8 and len(dev) == 2
        dev_labels = sorted(truth[p.id].same for p in dev)
        assert dev_labels == [False, True]

    def test_leaky_train_pair_dropped(self):
        pairs, truth = ten_pair_fixture()
        # p9 shares its left document with p0's left document
        pairs[9] = PairRecord(id="p9", fandoms=("f", "f"), texts=(pairs[0].texts[0], "unique"))
        for seed in range(20):
            train, dev = split_train_dev(pairs, truth, dev_fraction=0.2, seed=seed)
            dev_docs = {t for p in dev for t in p.texts}
            train_docs = {t for p in train for t in p.texts}
            assert not dev_docs & train_docs

    def test_deterministic(self):
        pairs, truth = ten_pair_fixture()
        first = split_train_dev(pairs, truth, 0.3, seed=5)
        second = split_train_dev(pairs, truth, 0.3, seed=5)
        assert first == second

    def test_fraction_validation(self):
        pairs, truth = ten_pair_fixture()
        with pytest.raises(CorpusError):
            split_train_dev(pairs, truth, 0.0, seed=1)
        with pytest.raises(CorpusError):
            split_train_dev(pairs, truth, 1.0, seed=1)

    def test_missing_truth_raises(self):
        pairs, truth = ten_pair_fixture()
        del truth["p3"]
        with pytest.raises(CorpusError, match="p3"):
            split_train_dev(pairs, truth, 0.2, seed=1)


class TestStats:
    def test_empty(self):
        stats = dataset_stats([], {})
        assert (stats.n_pairs, stats.n_same, stats.n_different) == (0, 0, 0)
        assert (stats.n_authors, stats.n_fandoms) == (0, 0)

    def test_counts(self):
        pairs, truth = ten_pair_fixture()
        stats = dataset_stats(pairs, truth)
        assert stats.n_pairs == 10
        assert stats.n_same == 5
        assert stats.n_different == 5
        assert stats.n_authors == 15  # a0..a9 plus b5..b9
        assert stats.n_fandoms == 2

    def test_permutation_invariant(self):
        pairs, truth = ten_pair_fixture()
        assert dataset_stats(pairs, truth) == dataset_stats(list(reversed(pairs)), truth)


class TestCollectAuthorRecords:
    def test_dissolves_and_dedupes(self):
        pairs = [
            PairRecord(id="p1", fandoms=("f1", "f2"), texts=("doc one", "doc two")),
            PairRecord(id="p2", fandoms=("f1", "f3"), texts=("doc one", "doc three")),
        ]
        truth = {
            "p1": TruthRecord(id="p1", same=True, author_ids=("a", "a")),
            "p2": TruthRecord(id="p2", same=False, author_ids=("a", "b")),
        }
        records, doc_texts = collect_author_records(pairs, truth)
        assert len(records) == 3  # "doc one" by a appears twice, deduplicated
        assert len(doc_texts) == 3
        assert {r.author_id for r in records} == {"a", "b"}

    def test_conflicting_attribution_raises(self):
        pairs = [
            PairRecord(id="p1", fandoms=("f", "f"), texts=("shared", "other")),
            PairRecord(id="p2", fandoms=("f", "f"), texts=("shared", "third")),
        ]
        truth = {
            "p1": TruthRecord(id="p1", same=False, author_ids=("a", "b")),
            "p2": TruthRecord(id="p2", same=False, author_ids=("c", "d")),
        }
        with pytest.raises(CorpusError, match="two authors"):
            collect_author_records(pairs, truth)

    def test_fingerprint_normalizes(self):
        # NFC and NFD spellings of the same text collapse to one document
        assert doc_fingerprint("café") == doc_fingerprint("café")
