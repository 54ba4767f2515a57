import pytest

from stylebayes.encoder import DocumentEncoder, EncoderConfig
from stylebayes.preprocess import PreprocessConfig, build_vocab, document_units, tokenize

_ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance" not in str(getattr(item, "fspath", "")):
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        _ACCEPTANCE_RESULTS[item.name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        outcome = _ACCEPTANCE_RESULTS[name]
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome)
        terminalreporter.write_line(f"[{label}] {name}")

TINY_TEXTS = [
    "the cat sat on the mat and the cat slept .",
    "a dog ran over the hill , and the dog barked loudly !",
    "the bird flew over the cat and the dog near the mat .",
]

TINY_FANDOMS = ["Cats", "Dogs"]


@pytest.fixture(scope="session")
def tiny_vocab():
    stream = [token for text in TINY_TEXTS for token in tokenize(text)]
    return build_vocab(stream, max_tokens=40, max_chars=30, min_freq=1, fandoms=TINY_FANDOMS)


@pytest.fixture(scope="session")
def tiny_preprocess_config():
    return PreprocessConfig(hop_length=4, overlapping_length=2, max_tokens=40, max_chars=30,
                            min_freq=1)


@pytest.fixture(scope="session")
def tiny_encoder_config():
    return EncoderConfig(
        char_emb_dim=3, token_emb_dim=4, word_rnn_dim=4, sent_rnn_dim=4, lev_dim=4, dropout=0.0
    )


@pytest.fixture()
def tiny_encoder(tiny_encoder_config, tiny_vocab):
    return DocumentEncoder(tiny_encoder_config, tiny_vocab, seed=7)


@pytest.fixture()
def tiny_docs(tiny_vocab, tiny_preprocess_config):
    return [
        document_units(text, TINY_FANDOMS[i % 2], tiny_vocab, tiny_preprocess_config)
        for i, text in enumerate(TINY_TEXTS)
    ]
