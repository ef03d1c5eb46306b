"""Defenses against hijacking: an input-denoising autoencoder and an
entropy-threshold output filter, plus the threshold sweep that shows the
filter's trade-off.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .camouflager import DecoderSpec, EncoderSpec, build_decoder, build_encoder
from .data import DatasetRole, ImageBatch, LabeledDataset, LabelMapping
from .errors import DivergenceError
from .evaluation import _softmax_entropies, camouflage_queries
from .training import OptimizerConfig, TargetModel, TrainingTrace, predict


def dataset_fingerprint(dataset: LabeledDataset) -> str:
    """Stable content hash binding a model to the data it trained on."""
    h = hashlib.sha256()
    h.update(dataset.role.value.encode())
    h.update(np.ascontiguousarray(dataset.images.data.numpy()).tobytes())
    h.update(np.ascontiguousarray(dataset.labels.numpy()).tobytes())
    return h.hexdigest()


class DenoiserModel(nn.Module):
    """Single-encoder autoencoder built from the Camouflager's blocks.

    Trained only on clean Original-role data; the fingerprint of that data
    rides along as provenance.
    """

    def __init__(self, input_size: int):
        super().__init__()
        if input_size % 16 != 0 or input_size <= 0:
            raise ValueError("input_size must be a positive multiple of 16")
        self.input_size = input_size
        spec = EncoderSpec()
        self.encoder = build_encoder(spec)
        self.decoder = build_decoder(DecoderSpec(in_channels=spec.channels[-1]))
        self.train_fingerprint: str = ""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x))


def train_denoiser(
    clean: LabeledDataset, opt_cfg: OptimizerConfig
) -> tuple[DenoiserModel, TrainingTrace]:
    """L1 reconstruction training on clean data; deterministic under seed."""
    if clean.role != DatasetRole.ORIGINAL:
        raise ValueError(f"denoisers train only on Original-role data, got {clean.role}")
    images = clean.images.to_symmetric()
    if images.channels != 3:
        raise ValueError("denoiser expects 3-channel images")
    x_all = images.data
    updating = opt_cfg.lr > 0
    trace = TrainingTrace(metric_name="reconstruction_l1", seed=opt_cfg.seed)
    start = time.monotonic()
    with torch.random.fork_rng():
        torch.manual_seed(opt_cfg.seed)
        model = DenoiserModel(images.height)
        opt = torch.optim.Adam(model.parameters(), lr=opt_cfg.lr)
        model.train(updating)
        n = x_all.shape[0]
        for epoch in range(opt_cfg.epochs):
            order = torch.randperm(n)
            epoch_loss, batches = 0.0, 0
            for s in range(0, n, opt_cfg.batch_size):
                x = x_all[order[s : s + opt_cfg.batch_size]]
                opt.zero_grad()
                loss = (model(x) - x).abs().mean()
                if not torch.isfinite(loss):
                    raise DivergenceError(epoch, float(loss))
                if updating:
                    loss.backward()
                    opt.step()
                epoch_loss += float(loss.detach())
                batches += 1
            trace.losses.append(epoch_loss / batches)
            trace.metrics.append(epoch_loss / batches)
    model.eval()
    trace.wall_clock = time.monotonic() - start
    model.train_fingerprint = dataset_fingerprint(clean)
    return model, trace


def denoise(model: DenoiserModel, batch: ImageBatch, chunk: int = 256) -> ImageBatch:
    """Reconstruct a batch; same shape, symmetric output range."""
    sym = batch.to_symmetric()
    if sym.height != model.input_size or sym.width != model.input_size:
        raise ValueError(
            f"batch is {sym.height}x{sym.width}, denoiser expects {model.input_size}"
        )
    model.eval()
    parts = []
    with torch.no_grad():
        for s in range(0, sym.n, chunk):
            parts.append(model(sym.data[s : s + chunk]))
    if not parts:
        return ImageBatch(sym.data.new_empty(sym.data.shape), "symmetric")
    return ImageBatch(torch.cat(parts), "symmetric")


@dataclass(frozen=True)
class EntropyFilter:
    """Accept or reject queries by the entropy of the model's output."""

    threshold: float
    direction: str  # "accept_below" or "accept_above"

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.direction not in ("accept_below", "accept_above"):
            raise ValueError(f"unknown direction {self.direction!r}")


def entropy_filter_apply(
    f: EntropyFilter, model: TargetModel, batch: ImageBatch
) -> torch.Tensor:
    """Boolean accept mask, one entry per sample."""
    entropies = _softmax_entropies(model, batch)
    if f.direction == "accept_above":
        mask = entropies > f.threshold
    else:
        mask = entropies < f.threshold
    return torch.from_numpy(mask)


def _defended_correct(
    defense,
    model: TargetModel,
    queries: ImageBatch,
    labels: torch.Tensor,
    mapping: LabelMapping | None,
) -> torch.Tensor:
    """Per-sample success under a defense; rejected samples count as failures."""
    if isinstance(defense, DenoiserModel):
        queries = denoise(defense, queries)
    preds = predict(model, queries)
    if mapping is not None:
        inverted, valid = mapping.invert_labels(preds)
        correct = valid & (inverted == labels)
    else:
        correct = preds == labels
    if isinstance(defense, EntropyFilter):
        correct = correct & entropy_filter_apply(defense, model, queries)
    return correct


def evaluate_defense(
    defense,
    hijacked: TargetModel,
    camouflager,
    mapping: LabelMapping,
    clean_test: LabeledDataset,
    hijack_test: LabeledDataset,
    hijackee: LabeledDataset | None = None,
    seed: int = 0,
) -> tuple[float, float]:
    """(utility_delta, asr_delta) of applying the defense to every query.

    `defense` is a DenoiserModel, an EntropyFilter, or None (the identity
    defense, whose deltas are exactly zero).
    """
    if camouflager is not None:
        attack_queries = camouflage_queries(
            camouflager, hijackee, hijack_test.images.to_symmetric(), seed
        )
    else:
        attack_queries = hijack_test.images.to_symmetric()
    clean_images = clean_test.images.to_symmetric()

    base_util = float(
        _defended_correct(None, hijacked, clean_images, clean_test.labels, None)
        .float().mean()
    )
    base_asr = float(
        _defended_correct(None, hijacked, attack_queries, hijack_test.labels, mapping)
        .float().mean()
    )
    def_util = float(
        _defended_correct(defense, hijacked, clean_images, clean_test.labels, None)
        .float().mean()
    )
    def_asr = float(
        _defended_correct(defense, hijacked, attack_queries, hijack_test.labels, mapping)
        .float().mean()
    )
    return def_util - base_util, def_asr - base_asr


@dataclass
class SweepRow:
    threshold: float
    clean_reject_rate: float  # false positives: clean queries thrown away
    attack_reject_rate: float
    defended_utility: float
    defended_asr: float


def sweep_entropy_thresholds(
    hijacked: TargetModel,
    camouflager,
    mapping: LabelMapping,
    clean_test: LabeledDataset,
    hijack_test: LabeledDataset,
    hijackee: LabeledDataset | None = None,
    thresholds=None,
    direction: str = "accept_below",
    seed: int = 0,
) -> list[SweepRow]:
    """ROC-style table over entropy thresholds.

    Reports the clean false-positive rate next to the attack rejection rate
    at every threshold; there is deliberately no default threshold.
    """
    if thresholds is None:
        hi = math.log(max(hijacked.class_count, 2))
        thresholds = np.linspace(0.0, hi, 21)
    if camouflager is not None:
        attack_queries = camouflage_queries(
            camouflager, hijackee, hijack_test.images.to_symmetric(), seed
        )
    else:
        attack_queries = hijack_test.images.to_symmetric()
    clean_images = clean_test.images.to_symmetric()

    clean_ent = _softmax_entropies(hijacked, clean_images)
    attack_ent = _softmax_entropies(hijacked, attack_queries)
    clean_preds = predict(hijacked, clean_images)
    clean_correct = (clean_preds == clean_test.labels).numpy()
    attack_preds = predict(hijacked, attack_queries)
    inverted, valid = mapping.invert_labels(attack_preds)
    attack_correct = (valid & (inverted == hijack_test.labels)).numpy()

    rows = []
    for t in np.asarray(thresholds, dtype=np.float64):
        if direction == "accept_below":
            clean_ok = clean_ent < t
            attack_ok = attack_ent < t
        elif direction == "accept_above":
            clean_ok = clean_ent > t
            attack_ok = attack_ent > t
        else:
            raise ValueError(f"unknown direction {direction!r}")
        rows.append(
            SweepRow(
                threshold=float(t),
                clean_reject_rate=float(1.0 - clean_ok.mean()),
                attack_reject_rate=float(1.0 - attack_ok.mean()),
                defended_utility=float((clean_ok & clean_correct).mean()),
                defended_asr=float((attack_ok & attack_correct).mean()),
            )
        )
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["threshold", "clean_reject_rate", "attack_reject_rate",
             "defended_utility", "defended_asr"]
        )
        for r in rows:
            writer.writerow(
                [repr(r.threshold), repr(r.clean_reject_rate),
                 repr(r.attack_reject_rate), repr(r.defended_utility),
                 repr(r.defended_asr)]
            )


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, newline="") as f:
        raw = list(csv.reader(f))
    return [
        SweepRow(*(float(v) for v in row)) for row in raw[1:]
    ]
