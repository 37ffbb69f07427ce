import json

import pytest
import torch

from promptattrib.cli import main
from promptattrib.fuzzy import entity_scores, normalize_scores


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic dataset plus a fast training config."""
    root = tmp_path_factory.mktemp("ws")
    data_dir = root / "data"
    code = run_cli(
        "gen-synthetic", "--out", str(data_dir), "--pairs", "12",
        "--attributes", "2", "--seed", "4",
    )
    assert code == 0
    cfg = data_dir / "fast.cfg"
    cfg.write_text(
        (data_dir / "run.cfg").read_text()
        + "train.epochs = 1\ntrain.batch_size = 8\nbackend.freeze = false\n"
    )
    return root, cfg


@pytest.fixture(scope="module")
def trained(workspace):
    root, cfg = workspace
    out = root / "run1"
    assert run_cli("train", "--config", str(cfg), "--out", str(out)) == 0
    return root, cfg, out


class TestGenSynthetic:
    def test_writes_expected_files(self, tmp_path):
        assert run_cli("gen-synthetic", "--out", str(tmp_path), "--pairs", "8") == 0
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {
            "entities_left.jsonl",
            "entities_right.jsonl",
            "pairs_train.jsonl",
            "pairs_valid.jsonl",
            "pairs_test.jsonl",
            "run.cfg",
        }

    def test_deterministic_given_seed(self, tmp_path):
        run_cli("gen-synthetic", "--out", str(tmp_path / "a"), "--pairs", "8", "--seed", "2")
        run_cli("gen-synthetic", "--out", str(tmp_path / "b"), "--pairs", "8", "--seed", "2")
        for p in (tmp_path / "a").iterdir():
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PROMPTATTRIB_SEED", "2")
        run_cli("gen-synthetic", "--out", str(tmp_path / "env"), "--pairs", "8")
        monkeypatch.delenv("PROMPTATTRIB_SEED")
        run_cli("gen-synthetic", "--out", str(tmp_path / "flag"), "--pairs", "8", "--seed", "2")
        assert (tmp_path / "env" / "pairs_train.jsonl").read_bytes() == (
            tmp_path / "flag" / "pairs_train.jsonl"
        ).read_bytes()

    def test_bad_attribute_count_is_usage_error(self, tmp_path):
        assert run_cli("gen-synthetic", "--out", str(tmp_path), "--attributes", "99") == 2


class TestTrain:
    def test_outputs(self, trained):
        _, _, out = trained
        assert (out / "trace.log").is_file()
        assert (out / "metrics.txt").is_file()
        assert (out / "checkpoint").is_dir()
        entries = [json.loads(l) for l in (out / "trace.log").read_text().splitlines()]
        assert len(entries) == 1
        assert "loss_total" in entries[0]
        assert "valid_f1" in entries[0]
        metrics = json.loads((out / "metrics.txt").read_text())
        assert {"f1", "accuracy", "average_precision"} <= set(metrics)

    def test_set_override_changes_epochs(self, workspace, tmp_path):
        _, cfg = workspace
        out = tmp_path / "run"
        assert (
            run_cli(
                "train", "--config", str(cfg), "--out", str(out),
                "--set", "train.epochs=2",
            )
            == 0
        )
        assert len((out / "trace.log").read_text().splitlines()) == 2

    def test_missing_config_is_usage_error(self, tmp_path):
        assert run_cli("train", "--config", str(tmp_path / "no.cfg")) == 2

    def test_unknown_key_is_usage_error(self, workspace, tmp_path):
        _, cfg = workspace
        bad = tmp_path / "bad.cfg"
        bad.write_text(cfg.read_text() + "train.warmup = 5\n")
        assert run_cli("train", "--config", str(bad), "--out", str(tmp_path / "o")) == 2

    def test_malformed_set_is_usage_error(self, workspace, tmp_path):
        _, cfg = workspace
        assert (
            run_cli(
                "train", "--config", str(cfg), "--out", str(tmp_path / "o"),
                "--set", "train.epochs",
            )
            == 2
        )

    def test_no_out_dir_is_usage_error(self, workspace, tmp_path):
        _, cfg = workspace
        stripped = tmp_path / "noout.cfg"
        stripped.write_text(cfg.read_text())
        assert run_cli("train", "--config", str(stripped)) == 2

    def test_env_seed_fallback_lands_in_checkpoint(self, workspace, tmp_path, monkeypatch):
        _, cfg = workspace
        noseed = cfg.parent / "noseed.cfg"
        noseed.write_text(
            "\n".join(
                line
                for line in cfg.read_text().splitlines()
                if not line.startswith("train.seed")
            )
            + "\n"
        )
        monkeypatch.setenv("PROMPTATTRIB_SEED", "33")
        out = tmp_path / "run"
        assert run_cli("train", "--config", str(noseed), "--out", str(out)) == 0
        assert "train.seed = 33" in (out / "checkpoint" / "run.cfg").read_text()


class TestEvalPredict:
    def test_eval_writes_metrics_and_predictions(self, trained, tmp_path):
        _, _, run_out = trained
        out = tmp_path / "eval"
        assert (
            run_cli(
                "eval", "--checkpoint", str(run_out / "checkpoint"), "--out", str(out)
            )
            == 0
        )
        rows = [
            json.loads(l) for l in (out / "predictions.txt").read_text().splitlines()
        ]
        assert rows
        assert {
            "left_id", "right_id", "match_score", "label",
            "entity_prob", "fuzzy_prob", "posterior", "beliefs",
        } <= set(rows[0])
        metrics = json.loads((out / "metrics.txt").read_text())
        assert metrics["n"] == len(rows)

    def test_predict_accepts_unlabeled(self, trained, tmp_path):
        root, _, run_out = trained
        unlabeled = tmp_path / "unlabeled.jsonl"
        src = [
            json.loads(l)
            for l in (root / "data" / "pairs_test.jsonl").read_text().splitlines()
        ]
        unlabeled.write_text(
            "\n".join(
                json.dumps({"left_id": r["left_id"], "right_id": r["right_id"]})
                for r in src
            )
            + "\n"
        )
        out = tmp_path / "pred"
        assert (
            run_cli(
                "predict", "--checkpoint", str(run_out / "checkpoint"),
                "--pairs", str(unlabeled), "--out", str(out),
            )
            == 0
        )
        assert (out / "predictions.txt").is_file()
        assert not (out / "metrics.txt").exists()

    def test_eval_rejects_unlabeled(self, trained, tmp_path):
        root, _, run_out = trained
        unlabeled = tmp_path / "unlabeled.jsonl"
        row = json.loads(
            (root / "data" / "pairs_test.jsonl").read_text().splitlines()[0]
        )
        unlabeled.write_text(
            json.dumps({"left_id": row["left_id"], "right_id": row["right_id"]}) + "\n"
        )
        assert (
            run_cli(
                "eval", "--checkpoint", str(run_out / "checkpoint"),
                "--pairs", str(unlabeled), "--out", str(tmp_path / "o"),
            )
            == 1
        )

    def test_missing_checkpoint_is_usage_error(self, tmp_path):
        assert (
            run_cli(
                "eval", "--checkpoint", str(tmp_path / "none"),
                "--out", str(tmp_path / "o"),
            )
            == 2
        )


class TestExplain:
    def explain_document(self, trained, capsys, left, right):
        _, _, run_out = trained
        code = run_cli(
            "explain", "--checkpoint", str(run_out / "checkpoint"),
            "--left-id", left, "--right-id", right,
        )
        assert code == 0
        return json.loads(capsys.readouterr().out)

    def test_document_structure(self, trained, capsys):
        doc = self.explain_document(trained, capsys, "L0000", "R0000")
        assert doc["left_id"] == "L0000"
        assert {"beliefs", "scores", "posterior", "entity_head", "fuzzy_head", "fused"} <= set(doc)
        assert doc["fused"]["label"] in (0, 1)

    def test_posterior_recomputes_from_printed_beliefs(self, trained, capsys):
        """The printed rule chain must be exactly reproducible from the
        printed beliefs, down to float identity."""
        doc = self.explain_document(trained, capsys, "L0001", "R0001")
        rows = [[b["same"], b["different"], b["ambiguous"]] for b in doc["beliefs"]]
        scores = entity_scores(torch.tensor(rows, dtype=torch.float32))
        posterior = normalize_scores(scores)
        assert float(scores[0]) == doc["scores"]["same"]
        assert float(scores[1]) == doc["scores"]["different"]
        assert float(scores[2]) == doc["scores"]["ambiguous"]
        assert float(posterior[0]) == doc["posterior"]["same"]
        assert float(posterior[1]) == doc["posterior"]["different"]
        assert float(posterior[2]) == doc["posterior"]["ambiguous"]

    def test_fused_score_is_head_mean(self, trained, capsys):
        doc = self.explain_document(trained, capsys, "L0002", "R0002")
        expected = (
            doc["entity_head"]["match_probability"]
            + doc["fuzzy_head"]["match_probability"]
        ) / 2
        assert doc["fused"]["match_score"] == pytest.approx(expected, abs=1e-12)

    def test_unknown_id_is_usage_error(self, trained):
        _, _, run_out = trained
        assert (
            run_cli(
                "explain", "--checkpoint", str(run_out / "checkpoint"),
                "--left-id", "NOPE", "--right-id", "R0000",
            )
            == 2
        )


class TestSweep:
    def test_sweep_writes_table(self, workspace, tmp_path):
        _, cfg = workspace
        out = tmp_path / "sweep"
        assert (
            run_cli(
                "sweep-dropout", "--config", str(cfg), "--out", str(out),
                "--ratios", "0,0.2", "--sweep-seeds", "1",
            )
            == 0
        )
        lines = (out / "sweep.txt").read_text().splitlines()
        assert any(l.startswith("ratio=0.0 seed=") for l in lines)
        assert any(l.startswith("ratio=0.2 seed=") for l in lines)
        assert any(l.startswith("ratio=0.0 mean_f1=") for l in lines)
        assert any(l.startswith("ratio=0.2 mean_f1=") for l in lines)

    def test_bad_ratio_list_is_usage_error(self, workspace, tmp_path):
        _, cfg = workspace
        assert (
            run_cli(
                "sweep-dropout", "--config", str(cfg), "--out", str(tmp_path / "o"),
                "--ratios", "abc",
            )
            == 2
        )


class TestReproducibility:
    def test_same_config_same_bytes(self, workspace, tmp_path):
        _, cfg = workspace
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run_cli("train", "--config", str(cfg), "--out", str(out_a)) == 0
        assert run_cli("train", "--config", str(cfg), "--out", str(out_b)) == 0
        assert (out_a / "trace.log").read_bytes() == (out_b / "trace.log").read_bytes()
        assert (out_a / "metrics.txt").read_bytes() == (out_b / "metrics.txt").read_bytes()
        for name in ("manifest.json", "run.cfg", "verbalizers.json", "weights.pt"):
            assert (out_a / "checkpoint" / name).read_bytes() == (
                out_b / "checkpoint" / name
            ).read_bytes()


class TestUsage:
    def test_no_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
