import pytest

from promptattrib.config import (
    KNOWN_KEYS,
    RunConfig,
    TrainConfig,
    build_run_config,
    config_to_text,
    load_run_config,
    parse_config_text,
)
from promptattrib.errors import ConfigError


class TestParseConfigText:
    def test_basic_keys(self):
        raw = parse_config_text("train.seed = 3\nprompt.template = t2\n")
        assert raw == {"train.seed": "3", "prompt.template": "t2"}

    def test_comments_and_blanks_skipped(self):
        raw = parse_config_text("# header\n\ntrain.seed = 1\n  # indented comment\n")
        assert raw == {"train.seed": "1"}

    def test_value_may_contain_equals(self):
        raw = parse_config_text("out = runs/a=b")
        assert raw["out"] == "runs/a=b"

    def test_missing_equals_rejected_with_line(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("train.seed = 1\nbogus line\n", source="f.cfg")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("train.seed = 1\ntrain.seed = 2\n")

    def test_empty_key_rejected(self):
        with pytest.raises(ConfigError, match="empty key"):
            parse_config_text(" = 3\n")


class TestBuildRunConfig:
    def test_defaults(self, tmp_path):
        run = build_run_config({}, tmp_path, env={})
        assert run.train.seed == 0
        assert run.train.template == "continuous"
        assert run.train.freeze_backbone is True
        assert run.backend_name == "toy"

    def test_unknown_key_named(self, tmp_path):
        with pytest.raises(ConfigError, match="train.sede"):
            build_run_config({"train.sede": "3"}, tmp_path, env={})

    def test_type_error_names_key_and_value(self, tmp_path):
        with pytest.raises(ConfigError, match="train.epochs.*'ten'"):
            build_run_config({"train.epochs": "ten"}, tmp_path, env={})

    def test_bool_parsing(self, tmp_path):
        for text, expected in (("true", True), ("no", False), ("1", True), ("off", False)):
            run = build_run_config({"backend.freeze": text}, tmp_path, env={})
            assert run.train.freeze_backbone is expected

    def test_bad_bool_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="backend.freeze"):
            build_run_config({"backend.freeze": "maybe"}, tmp_path, env={})

    def test_relative_paths_resolve_against_base(self, tmp_path):
        run = build_run_config({"data.entities_left": "ents.jsonl"}, tmp_path, env={})
        assert run.entities_left == tmp_path / "ents.jsonl"

    def test_absolute_path_kept(self, tmp_path):
        run = build_run_config({"data.entities_left": "/x/e.jsonl"}, tmp_path, env={})
        assert str(run.entities_left) == "/x/e.jsonl"

    def test_seed_env_fallback(self, tmp_path):
        run = build_run_config({}, tmp_path, env={"PROMPTATTRIB_SEED": "99"})
        assert run.train.seed == 99

    def test_explicit_seed_beats_env(self, tmp_path):
        run = build_run_config(
            {"train.seed": "5"}, tmp_path, env={"PROMPTATTRIB_SEED": "99"}
        )
        assert run.train.seed == 5

    def test_known_keys_all_accepted(self, tmp_path):
        samples = {
            "train.seed": "1",
            "train.learning_rate": "0.01",
            "train.epochs": "2",
            "train.batch_size": "4",
            "train.alpha": "0.5",
            "train.low_resource_fraction": "0.5",
            "train.grad_clip": "2.0",
            "train.patience": "3",
            "prompt.template": "t1",
            "prompt.soft_tokens_per_slot": "2",
            "prompt.budget": "64",
            "prompt.attribute_budget": "32",
            "prompt.share_banks": "true",
            "fuzzy.ambiguous_policy": "different",
            "fuzzy.smooth_max_tau": "0.1",
            "contrastive.enabled": "false",
            "contrastive.ratio": "0.2",
            "contrastive.lambda": "0.3",
            "dropout_scope": "full_input",
            "backend.freeze": "false",
            "backend.name": "toy",
            "backend.seed": "11",
            "backend.max_length": "128",
            "out": "runs/x",
            "data.entities_left": "a.jsonl",
            "data.entities_right": "b.jsonl",
            "data.pairs_train": "tr.jsonl",
            "data.pairs_valid": "va.jsonl",
            "data.pairs_test": "te.jsonl",
        }
        assert set(samples) == set(KNOWN_KEYS)
        run = build_run_config(samples, tmp_path, env={})
        assert run.train.template == "t1"
        assert run.train.contrast_weight == 0.3
        assert run.backend_seed == 11
        assert run.out_dir == tmp_path / "runs/x"


class TestTrainConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"epochs": 0},
            {"batch_size": 0},
            {"alpha": -0.1},
            {"contrast_weight": -1.0},
            {"contrast_ratio": 1.0},
            {"contrast_ratio": -0.2},
            {"low_resource_fraction": 0.0},
            {"low_resource_fraction": 1.5},
            {"grad_clip": 0.0},
            {"patience": -1},
            {"template": "t3"},
            {"soft_tokens_per_slot": 0},
            {"budget": -1},
            {"ambiguous_policy": "coin_flip"},
            {"smooth_max_tau": -0.5},
            {"dropout_scope": "everywhere"},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_budget_zero_means_disabled(self):
        cfg = TrainConfig(budget=0, attribute_budget=0)
        assert cfg.entity_budget is None
        assert cfg.fuzzy_budget is None

    def test_tau_zero_means_hard(self):
        assert TrainConfig(smooth_max_tau=0.0).tau is None
        assert TrainConfig(smooth_max_tau=0.2).tau == pytest.approx(0.2)

    def test_backend_seed_defaults_to_train_seed(self):
        run = RunConfig(train=TrainConfig(seed=17))
        assert run.resolved_backend_seed == 17
        run = RunConfig(train=TrainConfig(seed=17), backend_seed=4)
        assert run.resolved_backend_seed == 4

    def test_bad_backend_name(self):
        with pytest.raises(ConfigError, match="backend.name"):
            RunConfig(train=TrainConfig(), backend_name="gpt97")


class TestLoadRoundTrip:
    def test_load_with_overrides(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("train.seed = 2\nprompt.template = t2\n")
        run = load_run_config(cfg, overrides={"train.seed": "9"})
        assert run.train.seed == 9
        assert run.train.template == "t2"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "nope.cfg")

    def test_text_round_trip(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "train.seed = 4\ncontrastive.lambda = 0.25\n"
            "data.pairs_train = tr.jsonl\nout = runs/a\n"
        )
        run = load_run_config(cfg)
        text = config_to_text(run)
        reparsed = build_run_config(
            parse_config_text(text), tmp_path, env={}
        )
        assert reparsed == run

    def test_serialized_text_is_sorted_and_stable(self, tmp_path):
        run = build_run_config({"train.seed": "3"}, tmp_path, env={})
        text = config_to_text(run)
        keys = [line.split(" = ")[0] for line in text.strip().splitlines()]
        assert keys == sorted(keys)
        assert config_to_text(run) == text
