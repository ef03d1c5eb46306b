"""Glue between the config schema and the library: materializes datasets,
resolves feature extractors, runs experiments, and persists run directories
so every reported number is recomputable offline.
"""

from __future__ import annotations

import copy
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
import yaml

from . import synth
from .artifacts import RunDir
from .attack import (
    AttackConfig,
    HierarchicalScheme,
    TriggerPatch,
    TriggerSpec,
    hierarchical_query,
    read_pairs_csv,
    run_attack,
    write_pairs_csv,
)
from .camouflager import load_camouflager, save_camouflager
from .config import DatasetSpec, ExperimentConfig
from .data import (
    DatasetRole,
    LabeledDataset,
    LabelMapping,
    rescale_and_channelize,
    sample_hijackee,
)
from .defense import (
    dataset_fingerprint,
    evaluate_defense,
    sweep_entropy_thresholds,
    train_denoiser,
    write_sweep_csv,
)
from .errors import ConfigError, StageError
from .evaluation import (
    attack_success_rate,
    camouflage_queries,
    entropy_distribution,
    non_camouflaged_accuracy,
    tsne_embed,
    utility,
)
from .features import load_backbone, resolve_weights_dir, save_extractor, train_small_extractor
from .formats import (
    load_celeba_style,
    load_cifar_style,
    load_mnist_style,
    write_manifest,
)
from .plots import plot_entropy_hist, plot_sample_grid, plot_tsne
from .training import load_target, save_target, train_target

_SYNTH_GENERATORS = {
    "synth_objects": synth.synth_objects,
    "synth_digits": synth.synth_digits,
}


def materialize_pair(
    spec: DatasetSpec, default_seed: int, train_role: DatasetRole, test_role: DatasetRole
) -> tuple[LabeledDataset, LabeledDataset]:
    """Build (train, test) datasets from a declarative spec."""
    if spec.source in _SYNTH_GENERATORS:
        seed = spec.seed if spec.seed is not None else default_seed
        total = spec.train_n + spec.test_n
        ds = _SYNTH_GENERATORS[spec.source](
            total, size=spec.size, seed=seed, class_count=spec.class_count
        )
        train = ds.subset(range(spec.train_n), role=train_role)
        test = ds.subset(range(spec.train_n, total), role=test_role)
    elif spec.source == "synth_faces":
        seed = spec.seed if spec.seed is not None else default_seed
        total = spec.train_n + spec.test_n
        ds, _ = synth.synth_faces(total, size=spec.size, seed=seed)
        train = ds.subset(range(spec.train_n), role=train_role)
        test = ds.subset(range(spec.train_n, total), role=test_role)
    elif spec.source == "mnist_idx":
        train = load_mnist_style(spec.train_images, spec.train_labels, spec.class_count)
        test = load_mnist_style(spec.test_images, spec.test_labels, spec.class_count)
        train, test = train.with_role(train_role), test.with_role(test_role)
    elif spec.source == "cifar_binary":
        train = load_cifar_style(spec.train_paths, spec.class_count).with_role(train_role)
        test = load_cifar_style(spec.test_paths, spec.class_count).with_role(test_role)
    else:  # celeba_dir
        full = load_celeba_style(spec.image_dir, spec.attr_file)
        split_seed = spec.split_seed if spec.split_seed is not None else default_seed
        rng = np.random.default_rng(split_seed)
        order = rng.permutation(len(full))
        if spec.train_n + spec.test_n > len(full):
            raise ValueError(
                f"split {spec.train_n}+{spec.test_n} exceeds the {len(full)} "
                "available samples"
            )
        train = full.subset(order[: spec.train_n], role=train_role)
        test = full.subset(
            order[spec.train_n : spec.train_n + spec.test_n], role=test_role
        )
    return train, test


def get_extractor(cfg: ExperimentConfig, weights_dir, original_train: LabeledDataset):
    """Resolve the configured feature extractor.

    small_scratch trains on the original-domain data and is cached in the
    weights directory when absent (and training is allowed).
    """
    name = cfg.extractor.backbone
    directory = resolve_weights_dir(weights_dir)
    if name != "small_scratch":
        return load_backbone(name, directory)
    try:
        return load_backbone(name, directory)
    except Exception:
        if not cfg.extractor.train_if_missing:
            raise
    domain = LabeledDataset(
        rescale_and_channelize(original_train.images.to_unit(), cfg.input_size),
        original_train.labels,
        original_train.role,
        original_train.class_count,
    )
    extractor = train_small_extractor(
        domain,
        epochs=cfg.extractor.epochs,
        batch_size=cfg.extractor.batch_size,
        lr=cfg.extractor.lr,
        seed=cfg.seeds["extractor"],
    )
    save_extractor(extractor, directory)
    return extractor


def _snapshot_config(rd: RunDir, cfg: ExperimentConfig) -> None:
    doc = copy.deepcopy(cfg.raw)
    doc["seeds"] = {k: int(v) for k, v in cfg.seeds.items()}
    rd.config_snapshot.write_text(yaml.safe_dump(doc, sort_keys=False))


def _write_manifest(rd: RunDir, cfg: ExperimentConfig) -> None:
    entries = {
        "run_name": cfg.run_name,
        "attack_kind": cfg.attack.kind,
        "input_size": cfg.input_size,
        "target_arch": cfg.target.arch,
        "poison_count": cfg.attack.poison_count,
        "hijackee_classes": cfg.hijackee.classes,
        "hijackee_total": cfg.hijackee.total,
    }
    if cfg.original is not None:
        entries["original_source"] = cfg.original.source
        entries["original_train_n"] = cfg.original.train_n
        entries["original_test_n"] = cfg.original.test_n
    if cfg.hijacking is not None:
        entries["hijacking_source"] = cfg.hijacking.source
        entries["hijacking_train_n"] = cfg.hijacking.train_n
        entries["hijacking_test_n"] = cfg.hijacking.test_n
    for key, value in sorted(cfg.seeds.items()):
        entries[f"seed_{key}"] = value
    write_manifest(rd.manifest, entries)


def _save_mapping(path, mapping: LabelMapping) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "forward": list(mapping.forward),
                "original_count": mapping.original_count,
                "hijacking_count": mapping.hijacking_count,
            },
            indent=2,
        )
        + "\n"
    )


def _load_mapping(path) -> LabelMapping:
    d = json.loads(Path(path).read_text())
    return LabelMapping(tuple(d["forward"]), d["original_count"], d["hijacking_count"])


def _save_scheme(path, scheme: HierarchicalScheme, triggers: TriggerSpec) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "class_count": scheme.class_count,
                "clusters": scheme.clusters,
                "target_classes": scheme.target_classes,
                "image_size": triggers.image_size,
                "triggers": {
                    str(c): {"x": p.x, "y": p.y, "size": p.size, "color": list(p.color)}
                    for c, p in triggers.patches.items()
                },
            },
            indent=2,
        )
        + "\n"
    )


def _load_scheme(path) -> tuple[HierarchicalScheme, TriggerSpec]:
    d = json.loads(Path(path).read_text())
    scheme = HierarchicalScheme(d["class_count"], d["clusters"], d["target_classes"])
    patches = {
        int(c): TriggerPatch(p["x"], p["y"], p["size"], tuple(p["color"]))
        for c, p in d["triggers"].items()
    }
    return scheme, TriggerSpec(patches, d["image_size"])


def _require_datasets(cfg: ExperimentConfig, need_hijacking: bool) -> None:
    if cfg.original is None:
        raise ConfigError("datasets.original", "this command needs an original dataset")
    if need_hijacking and cfg.hijacking is None:
        raise ConfigError("datasets.hijacking", "this command needs a hijacking dataset")


def _build_attack_config(
    cfg: ExperimentConfig,
    original_train,
    original_test,
    hijacking_train,
    hijacking_test,
    extractor,
    camouflager_model=None,
    clean_reference=None,
    poison_count=None,
    hijackee_total=None,
) -> AttackConfig:
    return AttackConfig(
        kind=cfg.attack.kind,
        original_train=original_train,
        original_test=original_test,
        hijacking_train=hijacking_train,
        hijacking_test=hijacking_test,
        extractor=extractor,
        hijackee_classes=cfg.hijackee.classes,
        hijackee_total=cfg.hijackee.total if hijackee_total is None else hijackee_total,
        input_size=cfg.input_size,
        target_arch=cfg.target.arch,
        mapping_order=cfg.attack.mapping_order,
        poison_count=cfg.attack.poison_count if poison_count is None else poison_count,
        loss_cfg=cfg.loss,
        camouflager_opt=replace(cfg.camouflager_opt, seed=cfg.seeds["camouflager"]),
        target_opt=replace(cfg.target.opt, seed=cfg.seeds["target"]),
        clean_reference=clean_reference,
        camouflager_model=camouflager_model,
        clusters=cfg.attack.clusters,
        trigger_size=cfg.attack.trigger_size,
        compute_stealth=cfg.evaluation.compute_stealth,
        compute_entropy=cfg.evaluation.compute_entropy,
        stealth_sample_n=cfg.evaluation.stealth_sample_n,
        stealth_batch=cfg.evaluation.stealth_batch,
        seeds={k: cfg.seeds[k] for k in ("hijackee", "poison", "query", "stealth",
                                         "camouflager", "target")},
    )


def run_train_camouflager(cfg: ExperimentConfig, out_dir, weights_dir=None) -> RunDir:
    """Train a Camouflager alone and persist checkpoint plus trace."""
    from .camouflager import init_camouflager
    from .training import train_camouflager

    _require_datasets(cfg, need_hijacking=True)
    rd = RunDir.create(out_dir)
    _snapshot_config(rd, cfg)
    _write_manifest(rd, cfg)
    rd.write_status("running")
    try:
        original_train, _ = materialize_pair(
            cfg.original, cfg.seeds["data"], DatasetRole.ORIGINAL, DatasetRole.ORIGINAL
        )
        hijacking_train, _ = materialize_pair(
            cfg.hijacking, cfg.seeds["data"] + 1, DatasetRole.HIJACKING,
            DatasetRole.HIJACKING,
        )
        original_resized = LabeledDataset(
            rescale_and_channelize(original_train.images.to_unit(), cfg.input_size)
            .to_symmetric(),
            original_train.labels, original_train.role, original_train.class_count,
        )
        hijacking_resized = LabeledDataset(
            rescale_and_channelize(hijacking_train.images.to_unit(), cfg.input_size)
            .to_symmetric(),
            hijacking_train.labels, DatasetRole.HIJACKING, hijacking_train.class_count,
        )
        hijackee = sample_hijackee(
            original_resized, cfg.hijackee.classes, cfg.hijackee.total,
            cfg.seeds["hijackee"],
        )
        extractor = get_extractor(cfg, weights_dir, original_train)
        model = init_camouflager(cfg.input_size, cfg.seeds["camouflager"])
        opt = replace(cfg.camouflager_opt, seed=cfg.seeds["camouflager"])
        model, trace = train_camouflager(
            model, hijackee, hijacking_resized, extractor, cfg.loss, opt
        )
        save_camouflager(
            model, rd.camouflager_ckpt, cfg.seeds["camouflager"], cfg.loss.identifier()
        )
        trace.write_csv(rd.camouflager_trace)
    except Exception as exc:
        rd.write_status("failed", stage="camouflaging", error=str(exc))
        raise
    rd.write_status("completed")
    return rd


def run_hijack(cfg: ExperimentConfig, out_dir, weights_dir=None) -> RunDir:
    """Full attack run (or clean-model baseline) persisted to a run directory."""
    _require_datasets(cfg, need_hijacking=cfg.attack.kind != "clean")
    rd = RunDir.create(out_dir)
    _snapshot_config(rd, cfg)
    _write_manifest(rd, cfg)
    rd.write_status("running")
    stage = "preparatory"
    try:
        original_train, original_test = materialize_pair(
            cfg.original, cfg.seeds["data"], DatasetRole.ORIGINAL, DatasetRole.ORIGINAL
        )
        if cfg.attack.kind == "clean":
            resized = LabeledDataset(
                rescale_and_channelize(original_train.images.to_unit(), cfg.input_size)
                .to_symmetric(),
                original_train.labels, DatasetRole.ORIGINAL,
                original_train.class_count,
            )
            test_resized = LabeledDataset(
                rescale_and_channelize(original_test.images.to_unit(), cfg.input_size)
                .to_symmetric(),
                original_test.labels, DatasetRole.ORIGINAL, original_test.class_count,
            )
            stage = "executing"
            model, trace = train_target(
                cfg.target.arch, resized, replace(cfg.target.opt, seed=cfg.seeds["target"])
            )
            save_target(model, rd.target_ckpt)
            trace.write_csv(rd.target_trace)
            util = utility(model, test_resized)
            rd.report_json.write_text(
                json.dumps(
                    {
                        "schema_version": 1,
                        "kind": "clean",
                        "utility": util,
                        "clean_utility": util,
                        "asr": "not-applicable",
                        "seeds": {k: int(v) for k, v in cfg.seeds.items()},
                    },
                    indent=2,
                )
                + "\n"
            )
            rd.write_status("completed")
            return rd

        hijacking_train, hijacking_test = materialize_pair(
            cfg.hijacking, cfg.seeds["data"] + 1, DatasetRole.HIJACKING,
            DatasetRole.HIJACKING,
        )
        camouflager_model = None
        if cfg.attack.camouflager_checkpoint:
            camouflager_model, _ = load_camouflager(cfg.attack.camouflager_checkpoint)
        extractor = None
        if cfg.attack.kind != "naive" and camouflager_model is None:
            extractor = get_extractor(cfg, weights_dir, original_train)
        acfg = _build_attack_config(
            cfg, original_train, original_test, hijacking_train, hijacking_test,
            extractor, camouflager_model=camouflager_model,
        )
        stage = "camouflaging"
        result = run_attack(acfg)
        stage = "executing"
        _persist_attack(rd, cfg, result)
    except StageError as exc:
        rd.write_status("failed", stage=exc.stage, error=str(exc))
        raise
    except Exception as exc:
        rd.write_status("failed", stage=stage, error=str(exc))
        raise
    rd.write_status("completed")
    return rd


def _persist_attack(rd: RunDir, cfg: ExperimentConfig, result) -> None:
    if result.camouflager is not None:
        save_camouflager(
            result.camouflager, rd.camouflager_ckpt, cfg.seeds["camouflager"],
            cfg.loss.identifier(),
        )
    if result.camouflager_trace is not None:
        result.camouflager_trace.write_csv(rd.camouflager_trace)
    save_target(result.model, rd.target_ckpt)
    if result.clean_model is not None:
        save_target(result.clean_model, rd.clean_ckpt)
    if result.target_trace is not None:
        result.target_trace.write_csv(rd.target_trace)
    if result.poison_pairs is not None:
        write_pairs_csv(rd.pairs_csv, result.poison_pairs)
    if result.mapping is not None:
        _save_mapping(rd.mapping_json, result.mapping)
    if result.scheme is not None:
        _save_scheme(rd.scheme_json, result.scheme, result.triggers)
    result.report.write_json(rd.report_json)


class RunContext:
    """Artifacts of a completed run, reloaded for evaluate/defend/visualize."""

    def __init__(self, rd: RunDir, weights_dir=None):
        self.rd = rd
        self.cfg = _load_snapshot(rd)
        self.kind = self.cfg.attack.kind
        status = rd.read_status()
        if status.get("status") != "completed":
            raise RuntimeError(
                f"run at {rd.root} is not complete (status {status.get('status')!r})"
            )
        self.target = load_target(rd.require(rd.target_ckpt, "a target checkpoint"))
        self.camouflager = None
        if rd.camouflager_ckpt.exists():
            self.camouflager, _ = load_camouflager(rd.camouflager_ckpt)
        self.mapping = _load_mapping(rd.mapping_json) if rd.mapping_json.exists() else None
        self.scheme = self.triggers = None
        if rd.scheme_json.exists():
            self.scheme, self.triggers = _load_scheme(rd.scheme_json)
        self._materialize()

    def _materialize(self):
        cfg = self.cfg
        original_train, original_test = materialize_pair(
            cfg.original, cfg.seeds["data"], DatasetRole.ORIGINAL, DatasetRole.ORIGINAL
        )
        self.original_train = _resize_sym(original_train, cfg.input_size)
        self.original_test = _resize_sym(original_test, cfg.input_size)
        self.hijacking_train = self.hijacking_test = None
        self.hijackee = None
        if self.kind != "clean":
            hijacking_train, hijacking_test = materialize_pair(
                cfg.hijacking, cfg.seeds["data"] + 1, DatasetRole.HIJACKING,
                DatasetRole.HIJACKING,
            )
            self.hijacking_train = _resize_sym(
                hijacking_train, cfg.input_size, DatasetRole.HIJACKING
            )
            self.hijacking_test = _resize_sym(
                hijacking_test, cfg.input_size, DatasetRole.HIJACKING
            )
            self.hijackee = sample_hijackee(
                self.original_train, cfg.hijackee.classes, cfg.hijackee.total,
                cfg.seeds["hijackee"],
            )

    def rebuild_payload(self, limit: int | None = None) -> LabeledDataset:
        from .attack import build_payload

        pairs = read_pairs_csv(self.rd.require(self.rd.pairs_csv, "a poison-pair log"))
        if limit is not None:
            pairs = pairs[:limit]
        if self.kind == "naive":
            h_idx = [h for _, h in pairs]
            return LabeledDataset(
                self.hijacking_train.images.subset(h_idx),
                self.hijacking_train.labels[torch.as_tensor(h_idx, dtype=torch.long)],
                DatasetRole.CAMOUFLAGED,
                self.hijacking_train.class_count,
            )
        return build_payload(
            self.camouflager, self.hijackee, self.hijacking_train, pairs
        )


def _resize_sym(ds: LabeledDataset, size: int, role=None) -> LabeledDataset:
    return LabeledDataset(
        rescale_and_channelize(ds.images.to_unit(), size).to_symmetric(),
        ds.labels,
        role or ds.role,
        ds.class_count,
    )


def _load_snapshot(rd: RunDir) -> ExperimentConfig:
    from .config import load_config

    return load_config(rd.require(rd.config_snapshot, "a config snapshot"))


def run_evaluate(run_dir, weights_dir=None) -> dict:
    """Recompute metrics from persisted artifacts; no retraining."""
    rd = RunDir.open(run_dir)
    ctx = RunContext(rd, weights_dir)
    stored = json.loads(rd.require(rd.report_json, "a report").read_text())
    if ctx.kind == "clean":
        out = {
            "schema_version": 1,
            "kind": "clean",
            "utility": utility(ctx.target, ctx.original_test),
            "asr": "not-applicable",
            "stored_utility": stored["utility"],
        }
        rd.evaluate_json.write_text(json.dumps(out, indent=2) + "\n")
        return out
    util = utility(ctx.target, ctx.original_test)
    if ctx.kind == "hierarchical":
        decoded = hierarchical_query(
            ctx.camouflager, ctx.target, ctx.triggers, ctx.scheme,
            ctx.hijacking_test.images, hijackee=ctx.hijackee,
            seed=ctx.cfg.seeds["query"],
        )
        asr = float((decoded == ctx.hijacking_test.labels).float().mean())
        raw_decoded = hierarchical_query(
            None, ctx.target, ctx.triggers, ctx.scheme, ctx.hijacking_test.images
        )
        non_camo = float((raw_decoded == ctx.hijacking_test.labels).float().mean())
    else:
        asr = attack_success_rate(
            ctx.camouflager if ctx.kind != "naive" else None,
            ctx.target, ctx.mapping, ctx.hijacking_test,
            hijackee=ctx.hijackee, seed=ctx.cfg.seeds["query"],
        )
        non_camo = non_camouflaged_accuracy(ctx.target, ctx.mapping, ctx.hijacking_test)
    out = {
        "schema_version": 1,
        "kind": ctx.kind,
        "utility": util,
        "asr": asr,
        "non_camouflaged_acc": non_camo,
        "stored_utility": stored["utility"],
        "stored_asr": stored["asr"],
        "stored_non_camouflaged_acc": stored["non_camouflaged_acc"],
    }
    rd.evaluate_json.write_text(json.dumps(out, indent=2) + "\n")
    return out


def run_defend(run_dir, weights_dir=None) -> dict:
    """Train the denoiser defense and sweep the entropy filter on a run."""
    rd = RunDir.open(run_dir)
    ctx = RunContext(rd, weights_dir)
    if ctx.kind == "clean":
        raise RuntimeError("defenses evaluate attack runs, not clean baselines")
    if ctx.kind == "hierarchical":
        raise RuntimeError("defense evaluation supports flat attack runs only")
    cfg = ctx.cfg
    denoiser_opt = replace(cfg.defense.denoiser_opt, seed=cfg.seeds["denoiser"])
    denoiser, trace = train_denoiser(ctx.original_train, denoiser_opt)
    torch.save(
        {"state_dict": denoiser.state_dict(), "input_size": denoiser.input_size,
         "fingerprint": denoiser.train_fingerprint},
        rd.root / "denoiser.pt",
    )
    util_delta, asr_delta = evaluate_defense(
        denoiser, ctx.target, ctx.camouflager, ctx.mapping,
        ctx.original_test, ctx.hijacking_test,
        hijackee=ctx.hijackee, seed=cfg.seeds["query"],
    )
    rows = sweep_entropy_thresholds(
        ctx.target, ctx.camouflager, ctx.mapping, ctx.original_test,
        ctx.hijacking_test, hijackee=ctx.hijackee,
        thresholds=np.linspace(
            0.0, float(np.log(max(ctx.target.class_count, 2))),
            cfg.defense.sweep_points,
        ),
        direction=cfg.defense.sweep_direction,
        seed=cfg.seeds["query"],
    )
    write_sweep_csv(rd.entropy_sweep_csv, rows)
    out = {
        "schema_version": 1,
        "denoiser": {
            "utility_delta": util_delta,
            "asr_delta": asr_delta,
            "epochs": denoiser_opt.epochs,
            "final_reconstruction_l1": trace.losses[-1],
            "train_fingerprint": denoiser.train_fingerprint,
            "clean_fingerprint": dataset_fingerprint(ctx.original_train),
        },
        "entropy_filter": {
            "direction": cfg.defense.sweep_direction,
            "table": rd.entropy_sweep_csv.name,
        },
    }
    rd.defense_json.write_text(json.dumps(out, indent=2) + "\n")
    return out


def run_visualize(run_dir, weights_dir=None) -> list[Path]:
    """Emit one t-SNE scatter, one entropy histogram, one sample grid."""
    rd = RunDir.open(run_dir)
    ctx = RunContext(rd, weights_dir)
    if ctx.kind == "clean":
        raise RuntimeError("visualization needs an attack run")
    cfg = ctx.cfg
    per_role = cfg.evaluation.tsne_per_role
    payload = ctx.rebuild_payload(limit=per_role)
    batches = {
        "original": ctx.original_train.images.subset(range(min(per_role, len(ctx.original_train)))),
        "camouflaged": payload.images,
        "hijacking": ctx.hijacking_train.images.subset(
            range(min(per_role, len(ctx.hijacking_train)))
        ),
    }
    embedding = tsne_embed(batches, seed=cfg.seeds["tsne"])
    tsne_path = plot_tsne(embedding, rd.plots_dir / "tsne.png")

    clean_ent, _ = entropy_distribution(ctx.target, ctx.original_test)
    if ctx.kind == "naive" or ctx.camouflager is None:
        queries = ctx.hijacking_test.images
    else:
        queries = camouflage_queries(
            ctx.camouflager, ctx.hijackee, ctx.hijacking_test.images,
            cfg.seeds["query"],
        )
    attack_ent, _ = entropy_distribution(ctx.target, queries)
    hist_path = plot_entropy_hist(clean_ent, attack_ent, rd.plots_dir / "entropy_hist.png")

    pairs = read_pairs_csv(rd.pairs_csv)[:8]
    rows = {}
    if ctx.kind != "naive" and pairs:
        o_idx = [o for o, _ in pairs]
        rows["hijackee"] = ctx.hijackee.images.subset(o_idx)
    if pairs:
        h_idx = [h for _, h in pairs]
        rows["hijacking"] = ctx.hijacking_train.images.subset(h_idx)
    rows["camouflaged"] = payload.images.subset(range(min(8, len(payload))))
    grid_path = plot_sample_grid(rows, rd.plots_dir / "sample_grid.png")
    return [tsne_path, hist_path, grid_path]


def run_sweep(cfg: ExperimentConfig, out_dir, weights_dir=None) -> list[dict]:
    """One attack run per axis value; failures recorded, sweep continues."""
    if cfg.sweep is None:
        raise ConfigError("sweep", "this command needs a sweep section")
    _require_datasets(cfg, need_hijacking=True)
    if cfg.attack.kind == "clean":
        raise ConfigError("attack.kind", "sweeps run attack kinds, not clean baselines")
    rd = RunDir.create(out_dir)
    _snapshot_config(rd, cfg)
    _write_manifest(rd, cfg)
    rd.write_status("running")
    original_train, original_test = materialize_pair(
        cfg.original, cfg.seeds["data"], DatasetRole.ORIGINAL, DatasetRole.ORIGINAL
    )
    hijacking_train, hijacking_test = materialize_pair(
        cfg.hijacking, cfg.seeds["data"] + 1, DatasetRole.HIJACKING, DatasetRole.HIJACKING
    )
    extractor = None
    camouflager_model = None
    if cfg.attack.camouflager_checkpoint:
        camouflager_model, _ = load_camouflager(cfg.attack.camouflager_checkpoint)
    if cfg.attack.kind != "naive" and camouflager_model is None:
        extractor = get_extractor(cfg, weights_dir, original_train)

    # the clean reference depends only on the original data, so it is trained
    # once; the poison_count axis also shares one Camouflager because that
    # knob never touches Camouflager training, while the hijackee_size axis
    # retrains it per value (the hijackee set changes under it)
    from .camouflager import init_camouflager
    from .training import train_camouflager

    original_resized = _resize_sym(original_train, cfg.input_size)
    clean_reference, _ = train_target(
        cfg.target.arch, original_resized, replace(cfg.target.opt, seed=cfg.seeds["target"])
    )
    shared_camouflager = camouflager_model
    if (
        cfg.sweep.axis == "poison_count"
        and cfg.attack.kind != "naive"
        and shared_camouflager is None
    ):
        hijackee = sample_hijackee(
            original_resized, cfg.hijackee.classes, cfg.hijackee.total,
            cfg.seeds["hijackee"],
        )
        hijacking_resized = _resize_sym(
            hijacking_train, cfg.input_size, DatasetRole.HIJACKING
        )
        model = init_camouflager(cfg.input_size, cfg.seeds["camouflager"])
        shared_camouflager, _ = train_camouflager(
            model, hijackee, hijacking_resized, extractor, cfg.loss,
            replace(cfg.camouflager_opt, seed=cfg.seeds["camouflager"]),
        )

    rows = []
    for value in cfg.sweep.values:
        sub = RunDir.create(rd.root / f"value_{value}")
        _snapshot_config(sub, cfg)
        sub.write_status("running")
        row = {"value": value, "utility": None, "asr": None, "status": "completed",
               "error": ""}
        try:
            kwargs = {"clean_reference": clean_reference}
            if cfg.sweep.axis == "poison_count":
                kwargs["poison_count"] = value
                kwargs["camouflager_model"] = shared_camouflager
            else:
                kwargs["hijackee_total"] = value
                kwargs["camouflager_model"] = camouflager_model
            acfg = _build_attack_config(
                cfg, original_train, original_test, hijacking_train, hijacking_test,
                extractor, **kwargs,
            )
            result = run_attack(acfg)
            _persist_attack(sub, cfg, result)
            sub.write_status("completed")
            row["utility"] = result.report.utility
            row["asr"] = result.report.asr
        except Exception as exc:  # recorded, sweep continues
            sub.write_status("failed", error=str(exc))
            row["status"] = "failed"
            row["error"] = str(exc)
        rows.append(row)

    import csv as _csv

    with open(rd.sweep_csv, "w", newline="") as f:
        writer = _csv.writer(f)
        writer.writerow([cfg.sweep.axis, "utility", "asr", "status", "error"])
        for row in rows:
            writer.writerow(
                [row["value"],
                 "" if row["utility"] is None else repr(row["utility"]),
                 "" if row["asr"] is None else repr(row["asr"]),
                 row["status"], row["error"]]
            )
    rd.write_status("completed")
    return rows
