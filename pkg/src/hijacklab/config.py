"""Experiment configuration: a versioned YAML schema, validated before any
compute runs. Unknown keys are errors so typos in experiment grids fail loudly;
every random choice traces to a named seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import yaml

from .errors import ConfigError
from .losses import LossConfig
from .training import TARGET_ARCHS, OptimizerConfig

SCHEMA_VERSION = 1

DATASET_SOURCES = (
    "synth_objects", "synth_digits", "synth_faces",
    "mnist_idx", "cifar_binary", "celeba_dir",
)
ATTACK_KINDS_CFG = ("naive", "chameleon", "adverse_chameleon", "hierarchical", "clean")
BACKBONES = ("default_pretrained", "alt_pretrained", "small_scratch")
SWEEP_AXES = ("hijackee_size", "poison_count")

DEFAULT_SEEDS = {
    "data": 100,
    "hijackee": 0,
    "poison": 1,
    "query": 2,
    "stealth": 3,
    "camouflager": 10,
    "target": 20,
    "extractor": 30,
    "denoiser": 40,
    "tsne": 50,
}


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(d: dict, known: Sequence[str], path: str) -> None:
    for key in d:
        if key not in known:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _get_int(d: dict, key: str, path: str, default=None, minimum=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}", "required integer is missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {v}")
    return v


def _get_float(d: dict, key: str, path: str, default=None, minimum=None):
    if key not in d or d[key] is None:
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    v = float(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {v}")
    return v


def _get_str(d: dict, key: str, path: str, default=None, choices=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}", "required string is missing")
        return default
    v = d[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key}", f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(
            f"{path}.{key}", f"must be one of {list(choices)}, got {v!r}"
        )
    return v


def _get_bool(d: dict, key: str, path: str, default=False):
    if key not in d or d[key] is None:
        return default
    v = d[key]
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected a boolean, got {v!r}")
    return v


@dataclass
class DatasetSpec:
    source: str
    train_n: int = 0
    test_n: int = 0
    size: int = 32
    class_count: int = 10
    seed: int | None = None
    # file sources
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_paths: list[str] = field(default_factory=list)
    test_paths: list[str] = field(default_factory=list)
    image_dir: str | None = None
    attr_file: str | None = None
    split_seed: int | None = None


_DATASET_KEYS = (
    "source", "train_n", "test_n", "size", "class_count", "seed",
    "train_images", "train_labels", "test_images", "test_labels",
    "train_paths", "test_paths", "image_dir", "attr_file", "split_seed",
)


def _parse_dataset(d, path: str) -> DatasetSpec:
    d = _require_mapping(d, path)
    _reject_unknown(d, _DATASET_KEYS, path)
    source = _get_str(d, "source", path, choices=DATASET_SOURCES, required=True)
    spec = DatasetSpec(source=source)
    if source.startswith("synth"):
        spec.train_n = _get_int(d, "train_n", path, minimum=0, required=True)
        spec.test_n = _get_int(d, "test_n", path, minimum=0, required=True)
        spec.size = _get_int(d, "size", path, default=32, minimum=2)
        if spec.size % 2 != 0:
            raise ConfigError(f"{path}.size", "synthetic sizes must be even")
        default_classes = 8 if source == "synth_faces" else 10
        spec.class_count = _get_int(d, "class_count", path, default=default_classes,
                                    minimum=1)
        if source == "synth_faces" and spec.class_count != 8:
            raise ConfigError(
                f"{path}.class_count", "synth_faces always has 8 classes"
            )
        spec.seed = _get_int(d, "seed", path, default=None)
    elif source == "mnist_idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            setattr(spec, key, _get_str(d, key, path, required=True))
        spec.class_count = _get_int(d, "class_count", path, default=10, minimum=1)
    elif source == "cifar_binary":
        for key in ("train_paths", "test_paths"):
            v = d.get(key)
            if not isinstance(v, list) or not v or not all(isinstance(p, str) for p in v):
                raise ConfigError(f"{path}.{key}", "expected a non-empty list of paths")
            setattr(spec, key, list(v))
        spec.class_count = _get_int(d, "class_count", path, default=10, minimum=1)
    else:  # celeba_dir
        spec.image_dir = _get_str(d, "image_dir", path, required=True)
        spec.attr_file = _get_str(d, "attr_file", path, required=True)
        spec.train_n = _get_int(d, "train_n", path, minimum=0, required=True)
        spec.test_n = _get_int(d, "test_n", path, minimum=0, required=True)
        spec.split_seed = _get_int(d, "split_seed", path, default=None)
        spec.class_count = 8
    return spec


@dataclass
class HijackeeSpec:
    classes: int = 8
    total: int = 1000


@dataclass
class AttackSpec:
    kind: str = "chameleon"
    poison_count: int = 1000
    mapping_order: Any = "identity"
    clusters: int = 0
    trigger_size: int = 8
    camouflager_checkpoint: str | None = None


@dataclass
class ExtractorSpec:
    backbone: str = "small_scratch"
    train_if_missing: bool = True
    epochs: int = 4
    batch_size: int = 128
    lr: float = 1e-3


@dataclass
class TargetSpec:
    arch: str = "small_cnn"
    opt: OptimizerConfig = field(default_factory=OptimizerConfig)


@dataclass
class EvalSpec:
    stealth_sample_n: int = 1000
    stealth_batch: int = 100
    compute_stealth: bool = True
    compute_entropy: bool = True
    tsne_per_role: int = 100


@dataclass
class DefenseSpec:
    denoiser_opt: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(epochs=4)
    )
    sweep_direction: str = "accept_below"
    sweep_points: int = 21


@dataclass
class SweepSpec:
    axis: str = "poison_count"
    values: list[int] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    run_name: str = "run"
    out_dir: str | None = None
    input_size: int = 64
    seeds: dict = field(default_factory=lambda: dict(DEFAULT_SEEDS))
    original: DatasetSpec | None = None
    hijacking: DatasetSpec | None = None
    hijackee: HijackeeSpec = field(default_factory=HijackeeSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    extractor: ExtractorSpec = field(default_factory=ExtractorSpec)
    loss: LossConfig = field(default_factory=LossConfig)
    camouflager_opt: OptimizerConfig = field(default_factory=OptimizerConfig)
    target: TargetSpec = field(default_factory=TargetSpec)
    evaluation: EvalSpec = field(default_factory=EvalSpec)
    defense: DefenseSpec = field(default_factory=DefenseSpec)
    sweep: SweepSpec | None = None
    raw: dict = field(default_factory=dict, repr=False)


_TOP_KEYS = (
    "schema_version", "run_name", "out_dir", "input_size", "seeds",
    "datasets", "hijackee", "attack", "extractor", "loss",
    "camouflager_opt", "target", "evaluation", "defense", "sweep",
)


def _parse_opt(d, path: str, defaults: OptimizerConfig) -> OptimizerConfig:
    # no per-optimizer seed key: every seed lives in the top-level seeds table
    d = _require_mapping(d, path)
    _reject_unknown(d, ("lr", "batch_size", "epochs", "method"), path)
    try:
        return OptimizerConfig(
            lr=_get_float(d, "lr", path, default=defaults.lr, minimum=0.0),
            batch_size=_get_int(d, "batch_size", path, default=defaults.batch_size, minimum=1),
            epochs=_get_int(d, "epochs", path, default=defaults.epochs, minimum=1),
            seed=defaults.seed,
            method=_get_str(d, "method", path, default=defaults.method),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_config(doc: dict) -> ExperimentConfig:
    doc = _require_mapping(doc, "")
    _reject_unknown(doc, _TOP_KEYS, "")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            "schema_version",
            f"expected {SCHEMA_VERSION}, got {version!r}",
        )
    cfg = ExperimentConfig(raw=copy.deepcopy(doc))
    cfg.run_name = _get_str(doc, "run_name", "", default="run")
    cfg.out_dir = _get_str(doc, "out_dir", "", default=None)
    cfg.input_size = _get_int(doc, "input_size", "", default=64, minimum=16)
    if cfg.input_size % 16 != 0:
        raise ConfigError("input_size", "must be a multiple of 16")

    if "seeds" in doc and doc["seeds"] is not None:
        seeds = _require_mapping(doc["seeds"], "seeds")
        _reject_unknown(seeds, tuple(DEFAULT_SEEDS), "seeds")
        for key in seeds:
            cfg.seeds[key] = _get_int(seeds, key, "seeds", required=True)

    if "datasets" in doc and doc["datasets"] is not None:
        ds = _require_mapping(doc["datasets"], "datasets")
        _reject_unknown(ds, ("original", "hijacking"), "datasets")
        if "original" in ds:
            cfg.original = _parse_dataset(ds["original"], "datasets.original")
        if "hijacking" in ds:
            cfg.hijacking = _parse_dataset(ds["hijacking"], "datasets.hijacking")

    if "hijackee" in doc and doc["hijackee"] is not None:
        h = _require_mapping(doc["hijackee"], "hijackee")
        _reject_unknown(h, ("classes", "total"), "hijackee")
        cfg.hijackee = HijackeeSpec(
            classes=_get_int(h, "classes", "hijackee", default=8, minimum=1),
            total=_get_int(h, "total", "hijackee", default=1000, minimum=0),
        )

    if "attack" in doc and doc["attack"] is not None:
        a = _require_mapping(doc["attack"], "attack")
        _reject_unknown(
            a,
            ("kind", "poison_count", "mapping_order", "clusters",
             "trigger_size", "camouflager_checkpoint"),
            "attack",
        )
        order = a.get("mapping_order", "identity")
        if isinstance(order, list):
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in order):
                raise ConfigError("attack.mapping_order", "list entries must be integers")
        elif order != "identity":
            raise ConfigError(
                "attack.mapping_order", "must be 'identity' or a list of integers"
            )
        cfg.attack = AttackSpec(
            kind=_get_str(a, "kind", "attack", default="chameleon", choices=ATTACK_KINDS_CFG),
            poison_count=_get_int(a, "poison_count", "attack", default=1000, minimum=0),
            mapping_order=order,
            clusters=_get_int(a, "clusters", "attack", default=0, minimum=0),
            trigger_size=_get_int(a, "trigger_size", "attack", default=8, minimum=0),
            camouflager_checkpoint=_get_str(a, "camouflager_checkpoint", "attack"),
        )

    if "extractor" in doc and doc["extractor"] is not None:
        e = _require_mapping(doc["extractor"], "extractor")
        _reject_unknown(e, ("backbone", "train_if_missing", "epochs", "batch_size", "lr"),
                        "extractor")
        cfg.extractor = ExtractorSpec(
            backbone=_get_str(e, "backbone", "extractor", default="small_scratch",
                              choices=BACKBONES),
            train_if_missing=_get_bool(e, "train_if_missing", "extractor", default=True),
            epochs=_get_int(e, "epochs", "extractor", default=4, minimum=1),
            batch_size=_get_int(e, "batch_size", "extractor", default=128, minimum=1),
            lr=_get_float(e, "lr", "extractor", default=1e-3, minimum=0.0),
        )

    if "loss" in doc and doc["loss"] is not None:
        l = _require_mapping(doc["loss"], "loss")
        _reject_unknown(l, ("norm", "adverse", "w_vl", "w_sl", "w_asl"), "loss")
        try:
            cfg.loss = LossConfig(
                norm=_get_str(l, "norm", "loss", default="L1", choices=("L1", "L2")),
                adverse=_get_bool(l, "adverse", "loss", default=False),
                w_vl=_get_float(l, "w_vl", "loss", default=1.0, minimum=0.0),
                w_sl=_get_float(l, "w_sl", "loss", default=1.0, minimum=0.0),
                w_asl=_get_float(l, "w_asl", "loss", default=1.0, minimum=0.0),
            )
        except ValueError as exc:
            raise ConfigError("loss", str(exc)) from exc

    if "camouflager_opt" in doc and doc["camouflager_opt"] is not None:
        cfg.camouflager_opt = _parse_opt(
            doc["camouflager_opt"], "camouflager_opt", OptimizerConfig()
        )

    if "target" in doc and doc["target"] is not None:
        t = _require_mapping(doc["target"], "target")
        _reject_unknown(t, ("arch", "opt"), "target")
        opt = OptimizerConfig()
        if "opt" in t and t["opt"] is not None:
            opt = _parse_opt(t["opt"], "target.opt", opt)
        cfg.target = TargetSpec(
            arch=_get_str(t, "arch", "target", default="small_cnn", choices=TARGET_ARCHS),
            opt=opt,
        )

    if "evaluation" in doc and doc["evaluation"] is not None:
        ev = _require_mapping(doc["evaluation"], "evaluation")
        _reject_unknown(
            ev,
            ("stealth_sample_n", "stealth_batch", "compute_stealth",
             "compute_entropy", "tsne_per_role"),
            "evaluation",
        )
        cfg.evaluation = EvalSpec(
            stealth_sample_n=_get_int(ev, "stealth_sample_n", "evaluation",
                                      default=1000, minimum=1),
            stealth_batch=_get_int(ev, "stealth_batch", "evaluation",
                                   default=100, minimum=1),
            compute_stealth=_get_bool(ev, "compute_stealth", "evaluation", default=True),
            compute_entropy=_get_bool(ev, "compute_entropy", "evaluation", default=True),
            tsne_per_role=_get_int(ev, "tsne_per_role", "evaluation",
                                   default=100, minimum=10),
        )
        if cfg.evaluation.stealth_sample_n % cfg.evaluation.stealth_batch != 0:
            raise ConfigError(
                "evaluation.stealth_sample_n",
                "must be divisible by evaluation.stealth_batch",
            )

    if "defense" in doc and doc["defense"] is not None:
        df = _require_mapping(doc["defense"], "defense")
        _reject_unknown(df, ("denoiser_opt", "sweep_direction", "sweep_points"), "defense")
        den = OptimizerConfig(epochs=4)
        if "denoiser_opt" in df and df["denoiser_opt"] is not None:
            den = _parse_opt(df["denoiser_opt"], "defense.denoiser_opt", den)
        cfg.defense = DefenseSpec(
            denoiser_opt=den,
            sweep_direction=_get_str(
                df, "sweep_direction", "defense", default="accept_below",
                choices=("accept_below", "accept_above"),
            ),
            sweep_points=_get_int(df, "sweep_points", "defense", default=21, minimum=2),
        )

    if "sweep" in doc and doc["sweep"] is not None:
        sw = _require_mapping(doc["sweep"], "sweep")
        _reject_unknown(sw, ("axis", "values"), "sweep")
        values = sw.get("values")
        if (
            not isinstance(values, list)
            or not values
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0
                       for v in values)
        ):
            raise ConfigError("sweep.values", "expected a non-empty list of non-negative integers")
        cfg.sweep = SweepSpec(
            axis=_get_str(sw, "axis", "sweep", required=True, choices=SWEEP_AXES),
            values=list(values),
        )

    _validate_cross_fields(cfg)
    return cfg


def _validate_cross_fields(cfg: ExperimentConfig) -> None:
    kind = cfg.attack.kind
    if kind == "chameleon" and cfg.loss.adverse:
        raise ConfigError("loss.adverse", "chameleon attacks use the plain objective")
    if kind == "adverse_chameleon" and not cfg.loss.adverse:
        raise ConfigError("loss.adverse", "adverse_chameleon attacks need adverse: true")
    if kind == "hierarchical" and cfg.attack.clusters < 1:
        raise ConfigError("attack.clusters", "hierarchical attacks need clusters >= 1")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"no such config file: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from exc
    if doc is None:
        raise ConfigError("config", "config file is empty")
    return parse_config(doc)


def apply_seed_overrides(cfg: ExperimentConfig, overrides: Sequence[str]) -> None:
    """Apply --seed-override KEY=VALUE pairs onto cfg.seeds."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError("seed-override", f"expected KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in DEFAULT_SEEDS:
            raise ConfigError(
                "seed-override", f"unknown seed {key!r}; known: {sorted(DEFAULT_SEEDS)}"
            )
        try:
            cfg.seeds[key] = int(value)
        except ValueError as exc:
            raise ConfigError("seed-override", f"seed {key!r} needs an integer") from exc
