"""End-to-end attack orchestration: naive, chameleon, adverse-chameleon, and
hierarchical variants, plus query execution against a hijacked model.

An attack runs in three stages: preparatory (mapping, hijackee sampling,
geometry alignment), camouflaging (Camouflager training and poison payload
generation; skipped for the naive variant), and executing (poisoned target
training plus evaluation). Stage failures abort with the stage name.

The Camouflager never reads target-model parameters: no operation on the
camouflaging path accepts one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .camouflager import CamouflagerModel, camouflage_in_chunks, init_camouflager
from .data import (
    DatasetRole,
    ImageBatch,
    LabeledDataset,
    LabelMapping,
    assemble_poisoned,
    build_label_mapping,
    rescale_and_channelize,
    sample_hijackee,
)
from .errors import CapacityError, StageError
from .evaluation import (
    EvalReport,
    attack_success_rate,
    camouflage_queries,
    entropy_distribution,
    euclidean_stealthiness,
    non_camouflaged_accuracy,
    utility,
)
from .features import FeatureExtractor
from .losses import LossConfig
from .training import (
    OptimizerConfig,
    TargetModel,
    TrainingTrace,
    predict,
    train_camouflager,
    train_target,
)

ATTACK_KINDS = ("naive", "chameleon", "adverse_chameleon", "hierarchical")
ATTACK_STAGES = ("preparatory", "camouflaging", "executing")

# saturated primaries/secondaries for cluster triggers, unit range
_TRIGGER_COLORS = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (1.0, 1.0, 0.0),
    (1.0, 0.0, 1.0),
    (0.0, 1.0, 1.0),
    (1.0, 0.5, 0.0),
    (0.5, 0.0, 1.0),
    (1.0, 1.0, 1.0),
    (0.0, 0.0, 0.0),
)


@dataclass(frozen=True)
class TriggerPatch:
    """Square patch at (x, y) (top-left corner), side `size`, unit-range color."""

    x: int
    y: int
    size: int
    color: tuple[float, float, float]

    def __post_init__(self):
        if self.size < 0 or self.x < 0 or self.y < 0:
            raise ValueError("patch position and size must be non-negative")
        if len(self.color) != 3 or not all(0.0 <= c <= 1.0 for c in self.color):
            raise ValueError("color must be three unit-range components")


@dataclass(frozen=True)
class TriggerSpec:
    """Cluster id -> trigger patch; colors distinct, patches inside the image."""

    patches: dict[int, TriggerPatch]
    image_size: int

    def __post_init__(self):
        colors = [p.color for p in self.patches.values()]
        if len(set(colors)) != len(colors):
            raise ValueError("trigger colors must be distinct per cluster")
        for cid, p in self.patches.items():
            if p.x + p.size > self.image_size or p.y + p.size > self.image_size:
                raise ValueError(f"trigger for cluster {cid} exceeds image bounds")

    def __getitem__(self, cluster: int) -> TriggerPatch:
        return self.patches[cluster]


def default_triggers(clusters: int, image_size: int, patch_size: int = 8) -> TriggerSpec:
    """Top-left corner squares, one saturated color per cluster."""
    if clusters > len(_TRIGGER_COLORS):
        raise ValueError(f"at most {len(_TRIGGER_COLORS)} default trigger colors")
    patches = {
        c: TriggerPatch(0, 0, patch_size, _TRIGGER_COLORS[c]) for c in range(clusters)
    }
    return TriggerSpec(patches, image_size)


def apply_trigger(img: ImageBatch, patch: TriggerPatch) -> ImageBatch:
    """Stamp the patch color over its square; every other pixel bit-identical."""
    if patch.size == 0:
        return ImageBatch(img.data.clone(), img.value_range)
    if patch.x + patch.size > img.width or patch.y + patch.size > img.height:
        raise ValueError(
            f"patch {patch.size}x{patch.size} at ({patch.x}, {patch.y}) exceeds "
            f"{img.height}x{img.width} image"
        )
    color = torch.tensor(patch.color, dtype=img.data.dtype)
    if img.value_range == "symmetric":
        color = color * 2.0 - 1.0
    data = img.data.clone()
    data[:, :, patch.y : patch.y + patch.size, patch.x : patch.x + patch.size] = (
        color.view(1, 3, 1, 1)
    )
    return ImageBatch(data, img.value_range)


@dataclass(frozen=True)
class HierarchicalScheme:
    """Encode/decode hijacking labels as (cluster, residue) pairs.

    Clusters are contiguous blocks of class indices. Decoding is unambiguous
    only when each block spans at most target_classes consecutive labels,
    i.e. clusters >= ceil(class_count / target_classes).
    """

    class_count: int
    clusters: int
    target_classes: int

    def __post_init__(self):
        if self.clusters > self.target_classes:
            raise CapacityError(
                f"{self.clusters} clusters exceed the target model's "
                f"{self.target_classes} labels"
            )
        if self.class_count <= self.target_classes:
            raise ValueError(
                "the hierarchical variant exists for hijacking tasks with more "
                "labels than the target model; use a flat mapping instead"
            )
        if self.clusters < 1:
            raise ValueError("need at least one cluster")
        if self.clusters < math.ceil(self.class_count / self.target_classes):
            raise CapacityError(
                f"{self.clusters} clusters leave blocks wider than "
                f"{self.target_classes} labels, making decoding ambiguous; need at "
                f"least {math.ceil(self.class_count / self.target_classes)}"
            )

    @property
    def block(self) -> int:
        return math.ceil(self.class_count / self.clusters)

    def cluster_of(self, labels: torch.Tensor) -> torch.Tensor:
        return labels.long() // self.block

    def residue_of(self, labels: torch.Tensor) -> torch.Tensor:
        return labels.long() % self.target_classes

    def decode(self, cluster: int, residue: int) -> int:
        """Inverse of (cluster_of, residue_of); -1 when no class matches."""
        lo = cluster * self.block
        hi = min(lo + self.block, self.class_count)
        for label in range(lo, hi):
            if label % self.target_classes == residue:
                return label
        return -1


@dataclass
class AttackConfig:
    """Everything one attack run needs; datasets arrive in native geometry."""

    kind: str
    original_train: LabeledDataset
    original_test: LabeledDataset
    hijacking_train: LabeledDataset
    hijacking_test: LabeledDataset
    extractor: FeatureExtractor | None = None
    hijackee: LabeledDataset | None = None
    hijackee_classes: int = 8
    hijackee_total: int = 1000
    input_size: int = 64
    target_arch: str = "small_cnn"
    mapping_order: str | Sequence[int] = "identity"
    poison_count: int = 1000
    loss_cfg: LossConfig | None = None
    camouflager_opt: OptimizerConfig | None = None
    target_opt: OptimizerConfig = field(default_factory=OptimizerConfig)
    clean_reference: TargetModel | None = None
    camouflager_model: CamouflagerModel | None = None
    clusters: int = 0
    trigger_size: int = 8
    compute_stealth: bool = True
    compute_entropy: bool = True
    stealth_sample_n: int = 1000
    stealth_batch: int = 100
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.poison_count < 0:
            raise ValueError("poison_count must be non-negative")
        defaults = {"hijackee": 0, "poison": 1, "query": 2, "stealth": 3,
                    "camouflager": 10, "target": 20}
        self.seeds = {**defaults, **self.seeds}
        needs_camouflager = self.kind in ("chameleon", "adverse_chameleon", "hierarchical")
        if needs_camouflager and self.camouflager_model is None:
            if self.loss_cfg is None or self.camouflager_opt is None or self.extractor is None:
                raise ValueError(
                    f"{self.kind} attacks train a Camouflager and need loss_cfg, "
                    "camouflager_opt, and extractor (or a pre-trained camouflager_model)"
                )
        if self.kind == "chameleon" and self.loss_cfg is not None and self.loss_cfg.adverse:
            raise ValueError("chameleon attacks use the plain objective (adverse=false)")
        if self.kind == "adverse_chameleon" and self.loss_cfg is not None and not self.loss_cfg.adverse:
            raise ValueError("adverse_chameleon attacks need loss_cfg.adverse=true")
        if self.kind == "hierarchical" and self.clusters < 1:
            raise ValueError("hierarchical attacks need clusters >= 1")


@dataclass
class AttackResult:
    model: TargetModel
    camouflager: CamouflagerModel | None
    report: EvalReport
    mapping: LabelMapping | None = None
    scheme: HierarchicalScheme | None = None
    triggers: TriggerSpec | None = None
    poison_pairs: list[tuple[int, int]] | None = None
    hijackee: LabeledDataset | None = None
    payload: LabeledDataset | None = None
    camouflager_trace: TrainingTrace | None = None
    target_trace: TrainingTrace | None = None
    clean_model: TargetModel | None = None

    def __iter__(self):
        return iter((self.model, self.camouflager, self.report))


def _resize_dataset(ds: LabeledDataset, size: int, role: DatasetRole | None = None,
                    symmetric: bool = True) -> LabeledDataset:
    images = rescale_and_channelize(ds.images.to_unit(), size)
    if symmetric:
        images = images.to_symmetric()
    return LabeledDataset(images, ds.labels, role or ds.role, ds.class_count)


def draw_poison_pairs(
    hijackee_n: int, hijacking_n: int, poison_count: int, seed: int
) -> list[tuple[int, int]]:
    """Seeded (hijackee index, hijacking index) pairs for the poison payload.

    Hijacking indices are a permutation prefix while the payload fits in the
    hijacking set, uniform with replacement beyond that; hijackee partners
    are always uniform with replacement.
    """
    rng = np.random.default_rng(seed)
    if poison_count <= hijacking_n:
        h = rng.permutation(hijacking_n)[:poison_count]
    else:
        h = rng.integers(0, hijacking_n, size=poison_count)
    o = rng.integers(0, hijackee_n, size=poison_count)
    return list(zip(o.tolist(), h.tolist()))


def build_payload(
    camouflager: CamouflagerModel,
    hijackee: LabeledDataset,
    hijacking: LabeledDataset,
    pairs: list[tuple[int, int]],
) -> LabeledDataset:
    """Camouflage the logged pairs into the poison payload.

    The payload is fully reconstructible from (checkpoint, datasets, pairs).
    """
    if pairs:
        o_idx = [o for o, _ in pairs]
        h_idx = [h for _, h in pairs]
        x_o = hijackee.images.to_symmetric().subset(o_idx)
        x_h = hijacking.images.to_symmetric().subset(h_idx)
        images = camouflage_in_chunks(camouflager, x_o, x_h)
        labels = hijacking.labels[torch.as_tensor(h_idx, dtype=torch.long)]
    else:
        side = camouflager.input_size
        images = ImageBatch(torch.empty(0, 3, side, side), "symmetric")
        labels = torch.empty(0, dtype=torch.long)
    return LabeledDataset(images, labels, DatasetRole.CAMOUFLAGED, hijacking.class_count)


def write_pairs_csv(path, pairs: list[tuple[int, int]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["hijackee_index", "hijacking_index"])
        writer.writerows(pairs)


def read_pairs_csv(path) -> list[tuple[int, int]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return [(int(a), int(b)) for a, b in rows[1:]]


def execute_query(
    camouflager: CamouflagerModel | None,
    hijacked: TargetModel,
    mapping: LabelMapping,
    x_h: ImageBatch,
    hijackee: LabeledDataset | None = None,
    seed: int = 0,
) -> torch.Tensor:
    """Query the hijacked model the adversary's way; returns hijacking labels.

    Camouflage attacks pair each query with a uniformly drawn hijackee sample
    before querying; the naive variant submits x_h directly. Predictions
    outside the mapping's image come back as -1 (out-of-range, incorrect).
    """
    if camouflager is not None:
        if hijackee is None:
            raise ValueError("camouflage attacks need a hijackee sample source")
        queries = camouflage_queries(camouflager, hijackee, x_h, seed)
    else:
        queries = x_h.to_symmetric()
    preds = predict(hijacked, queries)
    inverted, _ = mapping.invert_labels(preds)
    return inverted


def hierarchical_prepare(
    hijacking: LabeledDataset,
    clusters: int,
    target_classes: int,
    triggers: TriggerSpec,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Split a poison payload (samples with hijacking labels) into the two
    hierarchical poison sets.

    clean_poison: the samples unchanged, labeled by cluster index.
    triggered_poison: the samples stamped with their cluster's trigger,
    labeled by (hijacking label mod target_classes).
    """
    scheme = HierarchicalScheme(hijacking.class_count, clusters, target_classes)
    cluster_ids = scheme.cluster_of(hijacking.labels)
    clean = LabeledDataset(
        ImageBatch(hijacking.images.data.clone(), hijacking.images.value_range),
        cluster_ids,
        DatasetRole.CAMOUFLAGED,
        target_classes,
    )
    triggered_parts = []
    for c in range(clusters):
        members = torch.nonzero(cluster_ids == c, as_tuple=True)[0]
        if members.numel() == 0:
            continue
        stamped = apply_trigger(hijacking.images.subset(members), triggers[c])
        triggered_parts.append((members, stamped))
    data = torch.empty_like(hijacking.images.data)
    for members, stamped in triggered_parts:
        data[members] = stamped.data
    triggered = LabeledDataset(
        ImageBatch(data, hijacking.images.value_range),
        scheme.residue_of(hijacking.labels),
        DatasetRole.CAMOUFLAGED,
        target_classes,
    )
    return clean, triggered


def hierarchical_query(
    camouflager: CamouflagerModel | None,
    hijacked: TargetModel,
    triggers: TriggerSpec,
    scheme: HierarchicalScheme,
    x_h: ImageBatch,
    hijackee: LabeledDataset | None = None,
    seed: int = 0,
    classify: Callable[[ImageBatch], torch.Tensor] | None = None,
) -> torch.Tensor:
    """Two-stage query: first read the cluster, then add that cluster's
    trigger and read the residue; decode both into the hijacking label.

    Returns -1 where (cluster, residue) decodes to no class. `classify`
    overrides the model's predict, letting tests drive the decode path with
    an oracle classifier.
    """
    if classify is None:
        classify = lambda batch: predict(hijacked, batch)
    if camouflager is not None:
        if hijackee is None:
            raise ValueError("camouflage attacks need a hijackee sample source")
        queries = camouflage_queries(camouflager, hijackee, x_h, seed)
    else:
        queries = x_h.to_symmetric()
    clusters_pred = classify(queries)
    out = torch.full((queries.n,), -1, dtype=torch.long)
    for c in range(scheme.clusters):
        members = torch.nonzero(clusters_pred == c, as_tuple=True)[0]
        if members.numel() == 0:
            continue
        stamped = apply_trigger(queries.subset(members), triggers[c])
        residues = classify(stamped)
        decoded = torch.tensor(
            [scheme.decode(c, int(r)) for r in residues], dtype=torch.long
        )
        out[members] = decoded
    # predictions beyond the cluster range decode to nothing
    return out


def _hierarchical_asr(
    camouflager, hijacked, triggers, scheme, hijack_test, hijackee, seed
) -> float:
    decoded = hierarchical_query(
        camouflager, hijacked, triggers, scheme, hijack_test.images.to_symmetric(),
        hijackee=hijackee, seed=seed,
    )
    return float((decoded == hijack_test.labels).float().mean())


def run_attack(cfg: AttackConfig) -> AttackResult:
    """Run one attack end-to-end and evaluate it."""
    stage = "preparatory"
    try:
        original_train = _resize_dataset(cfg.original_train, cfg.input_size)
        original_test = _resize_dataset(cfg.original_test, cfg.input_size)
        hijacking_train = _resize_dataset(
            cfg.hijacking_train, cfg.input_size, DatasetRole.HIJACKING
        )
        hijacking_test = _resize_dataset(
            cfg.hijacking_test, cfg.input_size, DatasetRole.HIJACKING
        )
        if cfg.hijackee is not None:
            hijackee = _resize_dataset(cfg.hijackee, cfg.input_size, DatasetRole.HIJACKEE)
        else:
            hijackee = sample_hijackee(
                original_train, cfg.hijackee_classes, cfg.hijackee_total,
                cfg.seeds["hijackee"],
            )
        mapping = None
        scheme = None
        triggers = None
        if cfg.kind == "hierarchical":
            scheme = HierarchicalScheme(
                hijacking_train.class_count, cfg.clusters, original_train.class_count
            )
            triggers = default_triggers(cfg.clusters, cfg.input_size, cfg.trigger_size)
        else:
            mapping = build_label_mapping(
                original_train.class_count, hijacking_train.class_count,
                cfg.mapping_order,
            )
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "camouflaging"
    camouflager = cfg.camouflager_model
    camouflager_trace = None
    pairs = None
    try:
        if cfg.kind == "naive":
            pairs = [
                (-1, h)
                for _, h in draw_poison_pairs(
                    1, len(hijacking_train), cfg.poison_count, cfg.seeds["poison"]
                )
            ]
            h_idx = [h for _, h in pairs]
            payload = LabeledDataset(
                hijacking_train.images.subset(h_idx),
                hijacking_train.labels[torch.as_tensor(h_idx, dtype=torch.long)]
                if pairs
                else torch.empty(0, dtype=torch.long),
                DatasetRole.CAMOUFLAGED,
                hijacking_train.class_count,
            )
        else:
            if camouflager is None:
                camouflager = init_camouflager(cfg.input_size, cfg.seeds["camouflager"])
                camouflager, camouflager_trace = train_camouflager(
                    camouflager, hijackee, hijacking_train, cfg.extractor,
                    cfg.loss_cfg, cfg.camouflager_opt,
                )
            pairs = draw_poison_pairs(
                len(hijackee), len(hijacking_train), cfg.poison_count,
                cfg.seeds["poison"],
            )
            payload = build_payload(camouflager, hijackee, hijacking_train, pairs)
        if cfg.kind == "hierarchical":
            clean_poison, triggered_poison = hierarchical_prepare(
                payload, cfg.clusters, original_train.class_count, triggers
            )
            assemble_mapping = build_label_mapping(
                original_train.class_count, original_train.class_count, "identity"
            )
            poison_payload = LabeledDataset(
                ImageBatch(
                    torch.cat([clean_poison.images.data, triggered_poison.images.data]),
                    "symmetric",
                ),
                torch.cat([clean_poison.labels, triggered_poison.labels]),
                DatasetRole.CAMOUFLAGED,
                original_train.class_count,
            )
            poisoned = assemble_poisoned(original_train, poison_payload, assemble_mapping)
        else:
            poisoned = assemble_poisoned(original_train, payload, mapping)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc

    stage = "executing"
    try:
        hijacked, target_trace = train_target(cfg.target_arch, poisoned, cfg.target_opt)
        clean_model = cfg.clean_reference
        if clean_model is None:
            clean_model, _ = train_target(
                cfg.target_arch, original_train, cfg.target_opt
            )
        util = utility(hijacked, original_test)
        clean_util = utility(clean_model, original_test)
        if cfg.kind == "hierarchical":
            asr = _hierarchical_asr(
                camouflager, hijacked, triggers, scheme, hijacking_test, hijackee,
                cfg.seeds["query"],
            )
            raw_decoded = hierarchical_query(
                None, hijacked, triggers, scheme, hijacking_test.images.to_symmetric()
            )
            non_camo = float((raw_decoded == hijacking_test.labels).float().mean())
        else:
            asr = attack_success_rate(
                camouflager if cfg.kind != "naive" else None,
                hijacked, mapping, hijacking_test,
                hijackee=hijackee, seed=cfg.seeds["query"],
            )
            non_camo = non_camouflaged_accuracy(hijacked, mapping, hijacking_test)
        stealth_c = stealth_h = None
        if (
            cfg.compute_stealth
            and len(payload) >= cfg.stealth_batch
            and len(original_train) >= cfg.stealth_batch
            and len(hijacking_train) >= cfg.stealth_batch
        ):
            stealth_c = euclidean_stealthiness(
                payload, original_train, cfg.stealth_sample_n, cfg.stealth_batch,
                cfg.seeds["stealth"],
            )
            stealth_h = euclidean_stealthiness(
                hijacking_train, original_train, cfg.stealth_sample_n,
                cfg.stealth_batch, cfg.seeds["stealth"],
            )
        entropy_stats = {}
        if cfg.compute_entropy:
            _, clean_stats = entropy_distribution(hijacked, original_test)
            entropy_stats["clean_test"] = clean_stats
            if cfg.kind != "naive" and camouflager is not None:
                queries = camouflage_queries(
                    camouflager, hijackee, hijacking_test.images.to_symmetric(),
                    cfg.seeds["query"],
                )
            else:
                queries = hijacking_test.images.to_symmetric()
            _, attack_stats = entropy_distribution(hijacked, queries)
            entropy_stats["attack_queries"] = attack_stats
        report = EvalReport(
            utility=util,
            clean_utility=clean_util,
            asr=asr,
            non_camouflaged_acc=non_camo,
            stealth_distance_camouflaged=stealth_c,
            stealth_distance_hijacking=stealth_h,
            stealth_value_range="symmetric",
            entropy_stats=entropy_stats,
            seeds=dict(cfg.seeds),
        )
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc

    return AttackResult(
        model=hijacked,
        camouflager=camouflager,
        report=report,
        mapping=mapping,
        scheme=scheme,
        triggers=triggers,
        poison_pairs=pairs,
        hijackee=hijackee,
        payload=payload,
        camouflager_trace=camouflager_trace,
        target_trace=target_trace,
        clean_model=clean_model,
    )
