"""Config schema: parsing, validation, defaults, seed overrides."""

import copy

import pytest
import yaml

from hijacklab.config import (
    DEFAULT_SEEDS,
    apply_seed_overrides,
    load_config,
    parse_config,
)
from hijacklab.errors import ConfigError


def _full_doc():
    return {
        "schema_version": 1,
        "run_name": "demo",
        "out_dir": "runs/demo",
        "input_size": 32,
        "seeds": {"data": 7, "target": 21},
        "datasets": {
            "original": {"source": "synth_objects", "train_n": 100, "test_n": 20},
            "hijacking": {"source": "synth_digits", "train_n": 100, "test_n": 20,
                          "size": 28, "class_count": 10},
        },
        "hijackee": {"classes": 10, "total": 50},
        "attack": {"kind": "chameleon", "poison_count": 80},
        "extractor": {"backbone": "small_scratch", "epochs": 2},
        "loss": {"norm": "L2", "w_vl": 0.5},
        "camouflager_opt": {"lr": 0.01, "epochs": 3, "batch_size": 16},
        "target": {"arch": "small_cnn", "opt": {"epochs": 2, "batch_size": 32}},
        "evaluation": {"stealth_sample_n": 60, "stealth_batch": 20},
        "defense": {"denoiser_opt": {"epochs": 2}, "sweep_points": 5},
    }


class TestParse:
    def test_full_document(self):
        cfg = parse_config(_full_doc())
        assert cfg.run_name == "demo"
        assert cfg.out_dir == "runs/demo"
        assert cfg.input_size == 32
        assert cfg.original.source == "synth_objects"
        assert cfg.original.train_n == 100
        assert cfg.hijacking.size == 28
        assert cfg.hijackee.classes == 10
        assert cfg.attack.kind == "chameleon"
        assert cfg.attack.poison_count == 80
        assert cfg.extractor.epochs == 2
        assert cfg.loss.norm == "L2"
        assert cfg.loss.w_vl == 0.5
        assert cfg.camouflager_opt.lr == 0.01
        assert cfg.target.opt.batch_size == 32
        assert cfg.evaluation.stealth_sample_n == 60
        assert cfg.defense.sweep_points == 5
        assert cfg.sweep is None
        assert cfg.raw == _full_doc()

    def test_minimal_document_gets_defaults(self):
        cfg = parse_config({"schema_version": 1})
        assert cfg.run_name == "run"
        assert cfg.input_size == 64
        assert cfg.seeds == DEFAULT_SEEDS
        assert cfg.seeds is not DEFAULT_SEEDS
        assert cfg.original is None and cfg.hijacking is None
        assert cfg.attack.kind == "chameleon"
        assert cfg.attack.mapping_order == "identity"
        assert cfg.loss.norm == "L1" and not cfg.loss.adverse
        assert cfg.extractor.backbone == "small_scratch"
        assert cfg.extractor.train_if_missing
        assert cfg.evaluation.compute_stealth and cfg.evaluation.compute_entropy
        assert cfg.defense.sweep_direction == "accept_below"

    def test_seed_table_merges_over_defaults(self):
        cfg = parse_config({"schema_version": 1, "seeds": {"data": 7, "target": 21}})
        assert cfg.seeds["data"] == 7
        assert cfg.seeds["target"] == 21
        assert cfg.seeds["poison"] == DEFAULT_SEEDS["poison"]

    def test_schema_version_required_and_checked(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({})
        assert exc.value.path == "schema_version"
        with pytest.raises(ConfigError, match="expected 1"):
            parse_config({"schema_version": 2})

    def test_non_mapping_rejected(self):
        with pytest.raises(ConfigError, match="mapping"):
            parse_config(["schema_version", 1])


class TestUnknownKeys:
    @pytest.mark.parametrize(
        "mutate, path",
        [
            (lambda d: d.__setitem__("poison_count", 5), "poison_count"),
            (lambda d: d["attack"].__setitem__("strength", 2), "attack.strength"),
            (lambda d: d["datasets"]["original"].__setitem__("szie", 32),
             "datasets.original.szie"),
            (lambda d: d["seeds"].__setitem__("warmup", 1), "seeds.warmup"),
            (lambda d: d["evaluation"].__setitem__("tsne", True), "evaluation.tsne"),
            (lambda d: d["camouflager_opt"].__setitem__("seed", 4),
             "camouflager_opt.seed"),
        ],
    )
    def test_reported_with_dotted_path(self, mutate, path):
        doc = _full_doc()
        mutate(doc)
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == path


class TestFieldValidation:
    def test_bool_is_not_an_int(self):
        doc = _full_doc()
        doc["attack"]["poison_count"] = True
        with pytest.raises(ConfigError, match="integer"):
            parse_config(doc)

    def test_int_is_not_a_bool(self):
        doc = _full_doc()
        doc["extractor"]["train_if_missing"] = 1
        with pytest.raises(ConfigError, match="boolean"):
            parse_config(doc)

    def test_input_size_multiple_of_16(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"schema_version": 1, "input_size": 40})
        assert exc.value.path == "input_size"

    def test_negative_counts_rejected(self):
        doc = _full_doc()
        doc["attack"]["poison_count"] = -1
        with pytest.raises(ConfigError, match=">= 0"):
            parse_config(doc)

    def test_unknown_choice_lists_options(self):
        doc = _full_doc()
        doc["attack"]["kind"] = "sneaky"
        with pytest.raises(ConfigError, match="one of"):
            parse_config(doc)

    def test_synth_odd_size_rejected(self):
        doc = _full_doc()
        doc["datasets"]["original"]["size"] = 33
        with pytest.raises(ConfigError, match="even"):
            parse_config(doc)

    def test_faces_class_count_fixed(self):
        doc = {
            "schema_version": 1,
            "datasets": {"original": {"source": "synth_faces", "train_n": 10,
                                      "test_n": 5, "class_count": 10}},
        }
        with pytest.raises(ConfigError, match="8 classes"):
            parse_config(doc)

    def test_mapping_order_list_of_ints_only(self):
        doc = _full_doc()
        doc["attack"]["mapping_order"] = [0, 1, "two"]
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "attack.mapping_order"
        doc["attack"]["mapping_order"] = "reversed"
        with pytest.raises(ConfigError, match="identity"):
            parse_config(doc)
        doc["attack"]["mapping_order"] = [3, 1, 2]
        assert parse_config(doc).attack.mapping_order == [3, 1, 2]

    def test_file_sources_require_paths(self):
        doc = {
            "schema_version": 1,
            "datasets": {"hijacking": {"source": "mnist_idx",
                                       "train_images": "a", "train_labels": "b",
                                       "test_images": "c"}},
        }
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "datasets.hijacking.test_labels"

    def test_cifar_paths_must_be_nonempty_list(self):
        doc = {
            "schema_version": 1,
            "datasets": {"original": {"source": "cifar_binary", "train_paths": [],
                                      "test_paths": ["t.bin"]}},
        }
        with pytest.raises(ConfigError, match="non-empty list"):
            parse_config(doc)

    def test_stealth_divisibility(self):
        doc = _full_doc()
        doc["evaluation"] = {"stealth_sample_n": 50, "stealth_batch": 20}
        with pytest.raises(ConfigError, match="divisible"):
            parse_config(doc)

    def test_optimizer_minimums(self):
        doc = _full_doc()
        doc["camouflager_opt"]["epochs"] = 0
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "camouflager_opt.epochs"
        doc = _full_doc()
        doc["target"]["opt"]["lr"] = -0.5
        with pytest.raises(ConfigError, match=">= 0"):
            parse_config(doc)

    def test_unknown_optimizer_method(self):
        doc = _full_doc()
        doc["camouflager_opt"]["method"] = "sgd"
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "camouflager_opt"


class TestCrossFieldValidation:
    def test_chameleon_rejects_adverse_loss(self):
        doc = _full_doc()
        doc["loss"]["adverse"] = True
        with pytest.raises(ConfigError, match="plain objective"):
            parse_config(doc)

    def test_adverse_chameleon_requires_adverse_loss(self):
        doc = _full_doc()
        doc["attack"]["kind"] = "adverse_chameleon"
        with pytest.raises(ConfigError, match="adverse: true"):
            parse_config(doc)
        doc["loss"]["adverse"] = True
        assert parse_config(doc).attack.kind == "adverse_chameleon"

    def test_hierarchical_requires_clusters(self):
        doc = _full_doc()
        doc["attack"]["kind"] = "hierarchical"
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "attack.clusters"
        doc["attack"]["clusters"] = 2
        assert parse_config(doc).attack.clusters == 2


class TestSweepSection:
    def test_parsed(self):
        doc = _full_doc()
        doc["sweep"] = {"axis": "poison_count", "values": [10, 20, 40]}
        cfg = parse_config(doc)
        assert cfg.sweep.axis == "poison_count"
        assert cfg.sweep.values == [10, 20, 40]

    def test_axis_restricted(self):
        doc = _full_doc()
        doc["sweep"] = {"axis": "learning_rate", "values": [1]}
        with pytest.raises(ConfigError, match="one of"):
            parse_config(doc)

    @pytest.mark.parametrize("values", [[], [1, -2], [1, True], "many", None])
    def test_values_validated(self, values):
        doc = _full_doc()
        doc["sweep"] = {"axis": "poison_count", "values": values}
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "sweep.values"


class TestLoadConfig:
    def test_yaml_round_trip(self, tmp_path):
        p = tmp_path / "exp.yaml"
        p.write_text(yaml.safe_dump(_full_doc()))
        cfg = load_config(p)
        assert cfg.run_name == "demo"
        assert cfg.raw == _full_doc()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="no such config"):
            load_config(tmp_path / "absent.yaml")

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.yaml"
        p.write_text("")
        with pytest.raises(ConfigError, match="empty"):
            load_config(p)

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "broken.yaml"
        p.write_text("a: [unclosed\n")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_config(p)


class TestSeedOverrides:
    def test_applied(self):
        cfg = parse_config({"schema_version": 1})
        apply_seed_overrides(cfg, ["target=99", "data=5"])
        assert cfg.seeds["target"] == 99
        assert cfg.seeds["data"] == 5

    def test_unknown_seed_name(self):
        cfg = parse_config({"schema_version": 1})
        with pytest.raises(ConfigError, match="unknown seed"):
            apply_seed_overrides(cfg, ["warmup=1"])

    def test_malformed_pairs(self):
        cfg = parse_config({"schema_version": 1})
        with pytest.raises(ConfigError, match="KEY=VALUE"):
            apply_seed_overrides(cfg, ["target"])
        with pytest.raises(ConfigError, match="integer"):
            apply_seed_overrides(cfg, ["target=soon"])
