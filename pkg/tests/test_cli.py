import json

import pytest

from stylebayes.cli import main
from stylebayes.corpus import load_pairs, save_pairs, save_truth
from stylebayes.preprocess import Vocabulary
from stylebayes.synthetic import generate_corpus

TINY_CONFIG = {
    "preprocess": {"hop_length": 4, "overlapping_length": 1, "max_tokens": 300,
                   "max_chars": 40, "min_freq": 1},
    "encoder": {"char_emb_dim": 3, "token_emb_dim": 4, "word_rnn_dim": 4,
                "sent_rnn_dim": 4, "lev_dim": 4, "dropout": 0.1},
    "train": {"epochs": 2, "batch_size": 4, "learning_rate": 0.003, "ensemble_size": 1},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = generate_corpus(
        n_authors=16, docs_per_author=(2, 3), tokens_per_doc=40, n_fandoms=3, seed=9,
        dev_fraction=0.25, test_fraction=0.25,
    )
    paths = {}
    for name in ("train", "dev", "test"):
        split = getattr(corpus, name)
        paths[f"{name}_pairs"] = root / f"{name}-pairs.jsonl"
        paths[f"{name}_truth"] = root / f"{name}-truth.jsonl"
        save_pairs(split.pairs, paths[f"{name}_pairs"])
        save_truth(split.truth, paths[f"{name}_truth"])
    config = root / "config.json"
    config.write_text(json.dumps(TINY_CONFIG))
    paths["config"] = config
    paths["root"] = root
    return paths


@pytest.fixture(scope="module")
def trained(workspace):
    out = workspace["root"] / "run"
    code = main([
        "train",
        "--pairs", str(workspace["train_pairs"]),
        "--truth", str(workspace["train_truth"]),
        "--dev-pairs", str(workspace["dev_pairs"]),
        "--dev-truth", str(workspace["dev_truth"]),
        "--config", str(workspace["config"]),
        "--seed", "3",
        "--out", str(out),
    ])
    assert code == 0
    return out


class TestStats:
    def test_prints_counts(self, workspace, capsys):
        code = main(["stats", "--pairs", str(workspace["train_pairs"]),
                     "--truth", str(workspace["train_truth"])])
        assert code == 0
        output = capsys.readouterr().out
        assert "pairs:" in output and "distinct authors:" in output

    def test_missing_file_exit_2(self, workspace, capsys):
        code = main(["stats", "--pairs", str(workspace["root"] / "nope.jsonl")])
        assert code == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_report_written(self, workspace):
        out = workspace["root"] / "stats.json"
        code = main(["stats", "--pairs", str(workspace["train_pairs"]),
                     "--truth", str(workspace["train_truth"]), "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["n_pairs"] == len(load_pairs(workspace["train_pairs"]))
        assert (workspace["root"] / "stats.json.manifest.json").exists()


class TestSplit:
    def test_writes_four_files_and_manifest(self, workspace):
        out = workspace["root"] / "split"
        code = main(["split", "--pairs", str(workspace["train_pairs"]),
                     "--truth", str(workspace["train_truth"]),
                     "--dev-fraction", "0.2", "--seed", "5", "--out", str(out)])
        assert code == 0
        for name in ("train-pairs", "train-truth", "dev-pairs", "dev-truth"):
            assert (out / f"{name}.jsonl").exists()
        assert (out / "split-manifest.json").exists()

    def test_idempotent_outputs(self, workspace):
        outs = []
        for suffix in ("a", "b"):
            out = workspace["root"] / f"split-{suffix}"
            assert main(["split", "--pairs", str(workspace["train_pairs"]),
                         "--truth", str(workspace["train_truth"]),
                         "--dev-fraction", "0.2", "--seed", "5", "--out", str(out)]) == 0
            outs.append(out)
        for name in ("train-pairs", "train-truth", "dev-pairs", "dev-truth"):
            assert (outs[0] / f"{name}.jsonl").read_bytes() == (
                outs[1] / f"{name}.jsonl"
            ).read_bytes()


class TestVocabCommand:
    def test_builds_and_persists(self, workspace):
        out = workspace["root"] / "vocab.json"
        code = main(["vocab", "--pairs", str(workspace["train_pairs"]),
                     "--config", str(workspace["config"]), "--out", str(out)])
        assert code == 0
        vocab = Vocabulary.load(out)
        assert len(vocab.token_to_id) > 2
        assert vocab.prefix_to_id


class TestSample:
    def test_writes_epoch_files(self, workspace):
        out = workspace["root"] / "epochs"
        code = main(["sample", "--pairs", str(workspace["train_pairs"]),
                     "--truth", str(workspace["train_truth"]),
                     "--epochs", "2", "--seed", "4", "--out", str(out)])
        assert code == 0
        for epoch in (1, 2):
            path = out / f"pairs-epoch-{epoch}.jsonl"
            records = load_pairs(path)
            assert records
            first = json.loads(path.read_text().splitlines()[0])
            assert isinstance(first["same"], bool)

    def test_deterministic_across_runs(self, workspace):
        contents = []
        for suffix in ("x", "y"):
            out = workspace["root"] / f"epochs-{suffix}"
            assert main(["sample", "--pairs", str(workspace["train_pairs"]),
                         "--truth", str(workspace["train_truth"]),
                         "--epochs", "1", "--seed", "4", "--out", str(out)]) == 0
            contents.append((out / "pairs-epoch-1.jsonl").read_bytes())
        assert contents[0] == contents[1]


class TestTrainPredictEvaluate:
    def test_training_artifacts(self, trained):
        assert (trained / "model-000.npz").exists()
        report = (trained / "report-000.csv").read_text().splitlines()
        assert report[0] == "epoch,loss_theta,loss_phi,logdetBinv,logdetWinv,dev_overall"
        assert len(report) == 3  # header + 2 epochs
        assert (trained / "train-manifest.json").exists()

    def test_predict_writes_answers(self, workspace, trained):
        out = workspace["root"] / "answers.jsonl"
        code = main(["predict", "--pairs", str(workspace["test_pairs"]),
                     "--checkpoints", str(trained), "--delta", "0.0", "--out", str(out)])
        assert code == 0
        lines = [json.loads(line) for line in out.read_text().splitlines()]
        test_ids = [p.id for p in load_pairs(workspace["test_pairs"])]
        assert [obj["id"] for obj in lines] == test_ids
        assert all(0.0 <= obj["value"] <= 1.0 for obj in lines)

    def test_predict_without_checkpoints_exit_2(self, workspace, capsys):
        empty = workspace["root"] / "no-models"
        empty.mkdir(exist_ok=True)
        code = main(["predict", "--pairs", str(workspace["test_pairs"]),
                     "--checkpoints", str(empty), "--delta", "0.0",
                     "--out", str(workspace["root"] / "nothing.jsonl")])
        assert code == 2
        assert "no checkpoints" in capsys.readouterr().err

    def test_calibrate_then_evaluate(self, workspace, trained):
        answers = workspace["root"] / "dev-answers.jsonl"
        assert main(["predict", "--pairs", str(workspace["dev_pairs"]),
                     "--checkpoints", str(trained), "--delta", "0.0",
                     "--out", str(answers)]) == 0
        delta_file = workspace["root"] / "delta.json"
        assert main(["calibrate", "--answers", str(answers),
                     "--truth", str(workspace["dev_truth"]),
                     "--grid", "0.0,0.01,0.05", "--out", str(delta_file)]) == 0
        delta = json.loads(delta_file.read_text())["delta"]
        assert delta in (0.0, 0.01, 0.05)

        evaluation = workspace["root"] / "evaluation.json"
        assert main(["evaluate", "--answers", str(answers),
                     "--truth", str(workspace["dev_truth"]),
                     "--out", str(evaluation)]) == 0
        payload = json.loads(evaluation.read_text())
        assert set(payload) == {"auc", "c@1", "f_05_u", "F1", "overall"}
        assert all(0.0 <= v <= 1.0 for v in payload.values())

    def test_evaluate_missing_ids_exit_2(self, workspace, trained, capsys):
        partial = workspace["root"] / "partial.jsonl"
        partial.write_text('{"id": "test-000000", "value": 0.9}\n')
        code = main(["evaluate", "--answers", str(partial),
                     "--truth", str(workspace["test_truth"]),
                     "--out", str(workspace["root"] / "ev2.json")])
        assert code == 2
        assert "missing" in capsys.readouterr().err


class TestHeatmap:
    def test_renders_report_and_weights(self, workspace, trained):
        pair_id = load_pairs(workspace["test_pairs"])[0].id
        out = workspace["root"] / "heatmap.html"
        code = main(["heatmap", "--pairs", str(workspace["test_pairs"]),
                     "--id", pair_id, "--checkpoint", str(trained / "model-000.npz"),
                     "--out", str(out)])
        assert code == 0
        page = out.read_text()
        assert "<html>" in page and "class=\"unit\"" in page
        weights = json.loads((workspace["root"] / "heatmap-weights.json").read_text())
        assert len(weights["documents"]) == 2
        for doc in weights["documents"]:
            assert sum(doc["sentence_weights"]) == pytest.approx(1.0, abs=1e-6)
            for group in doc["word_weights"]:
                assert sum(group) == pytest.approx(1.0, abs=1e-6)

    def test_unknown_pair_id_exit_2(self, workspace, trained, capsys):
        code = main(["heatmap", "--pairs", str(workspace["test_pairs"]),
                     "--id", "missing-id", "--checkpoint", str(trained / "model-000.npz"),
                     "--out", str(workspace["root"] / "hm2.html")])
        assert code == 2
        assert "missing-id" in capsys.readouterr().err


class TestConfigValidation:
    def test_all_problems_reported_at_once(self, workspace, capsys):
        bad = workspace["root"] / "bad-config.json"
        bad.write_text(json.dumps({
            "preprocess": {"hop_length": 0},
            "encoder": {"lev_dim": 0},
            "train": {"epochs": 0, "tau_s": 5.0, "tau_d": 1.0},
        }))
        code = main(["train", "--pairs", str(workspace["train_pairs"]),
                     "--truth", str(workspace["train_truth"]),
                     "--dev-pairs", str(workspace["dev_pairs"]),
                     "--dev-truth", str(workspace["dev_truth"]),
                     "--config", str(bad), "--out", str(workspace["root"] / "run2")])
        assert code == 2
        err = capsys.readouterr().err
        assert "hop_length" in err and "lev_dim" in err and "epochs" in err and "tau_s" in err

    def test_unknown_keys_rejected(self, workspace, capsys):
        bad = workspace["root"] / "unknown-config.json"
        bad.write_text(json.dumps({"train": {"leraning_rate": 0.1}}))
        code = main(["vocab", "--pairs", str(workspace["train_pairs"]),
                     "--config", str(bad), "--out", str(workspace["root"] / "v2.json")])
        assert code == 2
        assert "leraning_rate" in capsys.readouterr().err
