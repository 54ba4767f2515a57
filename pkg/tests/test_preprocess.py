import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylebayes.preprocess import (
    PAD_ID,
    UNK_ID,
    UNK_TOKEN,
    PreprocessConfig,
    Vocabulary,
    build_vocab,
    clean_fandom,
    document_units,
    fandom_prefix_embedding,
    mask,
    prefix_token,
    sliding_windows,
    tokenize,
)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_quoted_ellipsis(self):
        assert tokenize("He said, 'go...'") == ["He", "said", ",", "'", "go", "...", "'"]

    def test_internal_punctuation_kept(self):
        assert tokenize("it's a well-known trick") == ["it's", "a", "well-known", "trick"]

    def test_leading_punctuation(self):
        assert tokenize('"Stop!" she cried.') == ['"', "Stop", "!", '"', "she", "cried", "."]

    def test_mixed_trailing_runs(self):
        assert tokenize("really?!") == ["really", "?", "!"]

    def test_idempotent_on_its_own_output(self):
        tokens = tokenize("He said, 'go...' -- twice?!")
        assert tokenize(" ".join(tokens)) == tokens


text_strategy = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), max_codepoint=0x2FFF),
    max_size=80,
)


@settings(max_examples=200, deadline=None)
@given(text_strategy)
def test_tokenize_preserves_non_whitespace(text):
    tokens = tokenize(text)
    assert "".join(tokens) == "".join(text.split())


@settings(max_examples=200, deadline=None)
@given(text_strategy)
def test_tokenize_idempotence(text):
    tokens = tokenize(text)
    assert tokenize(" ".join(tokens)) == tokens


class TestBuildVocab:
    def test_min_freq_filters(self):
        vocab = build_vocab(["a"] * 5 + ["b"], max_tokens=3, max_chars=10, min_freq=2)
        assert "a" in vocab.token_to_id
        assert "b" not in vocab.token_to_id
        assert vocab.token_id("b") == UNK_ID

    def test_all_unique_gives_reserved_only(self):
        vocab = build_vocab(["x", "y", "z"], max_tokens=10, max_chars=10, min_freq=2)
        assert set(vocab.token_to_id) == {"<PAD>", "<UNK>"}

    def test_tie_at_budget_boundary_prefers_lexicographic(self):
        stream = ["bb"] * 3 + ["aa"] * 3
        vocab = build_vocab(stream, max_tokens=3, max_chars=10, min_freq=1)
        assert "aa" in vocab.token_to_id
        assert "bb" not in vocab.token_to_id

    def test_budget_below_reserved_raises(self):
        with pytest.raises(ValueError):
            build_vocab(["a"], max_tokens=1, max_chars=10, min_freq=1)

    def test_deterministic(self):
        stream = ["c", "a", "b", "a", "c", "c", "b"]
        first = build_vocab(stream, 5, 10, 1)
        second = build_vocab(list(stream), 5, 10, 1)
        assert first.token_to_id == second.token_to_id
        assert first.char_to_id == second.char_to_id

    def test_prefix_slots_beyond_budget(self):
        vocab = build_vocab(["a"] * 3, max_tokens=3, max_chars=10, min_freq=1,
                            fandoms=["Batman", "Harry Potter"])
        assert len(vocab.token_to_id) <= vocab.token_budget
        assert vocab.prefix_to_id[prefix_token("Batman")] == len(vocab.token_to_id)
        assert vocab.prefix_id("Harry Potter") == len(vocab.token_to_id) + 1
        assert vocab.prefix_id("unseen fandom") == UNK_ID
        assert vocab.n_token_rows == len(vocab.token_to_id) + 2

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocab(
            ["alpha", "beta", "alpha", ",", "beta", "alpha"],
            max_tokens=6,
            max_chars=12,
            min_freq=1,
            fandoms=["Batman"],
        )
        path = tmp_path / "vocab.json"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded == vocab


class TestMask:
    @pytest.fixture
    def vocab(self):
        return build_vocab(["the"] * 5 + ["cat"] * 3, max_tokens=10, max_chars=10, min_freq=2)

    def test_in_vocab(self, vocab):
        token_ids, char_ids = mask(["the"], vocab)
        assert token_ids[0] == vocab.token_to_id["the"]
        assert char_ids[0] == vocab.encode_chars("the")
        assert UNK_ID not in char_ids[0]

    def test_oov_keeps_chars(self, vocab):
        token_ids, char_ids = mask(["that"], vocab)
        assert token_ids[0] == UNK_ID
        # 't', 'h', 'a' are frequent enough; they survive masking
        assert char_ids[0] == vocab.encode_chars("that")
        assert char_ids[0][0] != UNK_ID

    def test_oov_with_rare_char(self, vocab):
        token_ids, char_ids = mask(["zxq"], vocab)
        assert token_ids[0] == UNK_ID
        assert all(cid == UNK_ID for cid in char_ids[0])

    def test_length_preserved(self, vocab):
        tokens = ["the", "cat", "zxq", "the"]
        token_ids, char_ids = mask(tokens, vocab)
        assert len(token_ids) == len(tokens)
        assert len(char_ids) == len(tokens)


class TestSlidingWindows:
    def test_ten_tokens_two_windows(self):
        tokens = [f"t{i}" for i in range(1, 11)]
        units = sliding_windows(tokens, hop_length=4, overlapping_length=2, fandom="F")
        assert len(units) == 2
        assert units[0].tokens == ("t1", "t2", "t3", "t4", "t5", "t6")
        assert units[1].tokens == ("t5", "t6", "t7", "t8", "t9", "t10")
        assert all(unit.prefix == "F" for unit in units)
        # window length formula: hop + overlap (+ 1 prefix at encode time)
        assert len(units[0].tokens) == 4 + 2

    def test_zero_overlap_disjoint(self):
        tokens = list("abcdefgh")
        units = sliding_windows(tokens, hop_length=3, overlapping_length=0, fandom="F")
        assert [u.tokens for u in units] == [("a", "b", "c"), ("d", "e", "f"), ("g", "h")]

    def test_short_input_single_unit(self):
        units = sliding_windows(["a", "b"], hop_length=4, overlapping_length=2, fandom="F")
        assert len(units) == 1
        assert units[0].tokens == ("a", "b")

    def test_empty_input(self):
        assert sliding_windows([], 4, 2, "F") == []

    def test_consecutive_overlap_size(self):
        tokens = [str(i) for i in range(23)]
        units = sliding_windows(tokens, hop_length=5, overlapping_length=3, fandom="F")
        for first, second in zip(units, units[1:-1]):
            shared = set(first.tokens) & set(second.tokens)
            assert len(shared) == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            sliding_windows(["a"], 0, 2, "F")
        with pytest.raises(ValueError):
            sliding_windows(["a"], 4, -1, "F")


@settings(max_examples=200, deadline=None)
@given(
    st.integers(min_value=0, max_value=60),
    st.integers(min_value=1, max_value=7),
    st.integers(min_value=0, max_value=5),
)
def test_window_coverage_loses_no_token(n_tokens, hop, overlap):
    tokens = [f"w{i}" for i in range(n_tokens)]
    units = sliding_windows(tokens, hop, overlap, "F")
    recovered = []
    for k, unit in enumerate(units):
        offset = len(recovered) - k * hop  # tokens already covered in this window
        recovered.extend(unit.tokens[offset:])
    assert recovered == tokens


class TestPrefixEmbedding:
    @staticmethod
    def lookup_table(table):
        def lookup(token):
            return table.get(token, table[UNK_TOKEN])

        return lookup

    def test_single_token_identity(self):
        table = {UNK_TOKEN: np.zeros(2), "Batman": np.array([1.0, 2.0])}
        got = fandom_prefix_embedding("Batman", self.lookup_table(table))
        assert np.allclose(got, [1.0, 2.0])

    def test_two_tokens_average(self):
        table = {
            UNK_TOKEN: np.zeros(2),
            "Harry": np.array([2.0, 0.0]),
            "Potter": np.array([0.0, 4.0]),
        }
        got = fandom_prefix_embedding("Harry Potter", self.lookup_table(table))
        assert np.allclose(got, [1.0, 2.0])

    def test_non_ascii_removed_before_lookup(self):
        assert clean_fandom("Pokémon") == "Pokmon"
        table = {UNK_TOKEN: np.zeros(1), "Pokmon": np.array([7.0])}
        got = fandom_prefix_embedding("Pokémon", self.lookup_table(table))
        assert np.allclose(got, [7.0])

    def test_empty_after_cleaning_uses_unk(self):
        table = {UNK_TOKEN: np.array([3.0, 3.0])}
        got = fandom_prefix_embedding("ポケモン", self.lookup_table(table))
        assert np.allclose(got, [3.0, 3.0])


class TestDocumentUnits:
    def test_full_pipeline(self):
        text = "the cat sat on the mat. the cat ran."
        stream = tokenize(text)
        vocab = build_vocab(stream, max_tokens=20, max_chars=30, min_freq=2, fandoms=["F"])
        config = PreprocessConfig(hop_length=3, overlapping_length=1)
        units = document_units(text, "F", vocab, config)
        assert units
        for unit in units:
            assert len(unit.token_ids) == len(unit.tokens)
            assert len(unit.char_ids) == len(unit.tokens)
            assert unit.prefix == "F"
            assert PAD_ID not in unit.token_ids

    def test_config_validation_collects_all(self):
        config = PreprocessConfig(hop_length=0, overlapping_length=-2, min_freq=0)
        problems = config.validate()
        assert len(problems) == 3
