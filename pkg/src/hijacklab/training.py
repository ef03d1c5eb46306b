"""Optimization loops for the Camouflager and for target classifiers.

One training routine serves clean and poisoned target models alike; the
attack is data-only, so nothing here branches on dataset role beyond
validation.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as TF
import torchvision

from .camouflager import CamouflagerModel
from .data import DatasetRole, ImageBatch, LabeledDataset, pair_epoch
from .errors import DivergenceError
from .features import FeatureExtractor
from .losses import LossConfig, composite_loss

TARGET_FORMAT = "target-checkpoint-v1"

TARGET_ARCHS = ("small_cnn", "resnet_style", "vgg_style", "googlenet_style")


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam hyperparameters for one training run.

    lr = 0 is allowed and means "no state moves at all": parameters and
    batch-norm statistics stay bit-identical to initialization.
    """

    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 1
    seed: int = 0
    method: str = "adam"

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.method != "adam":
            raise ValueError(f"unsupported optimizer method {self.method!r}")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "batch_size": self.batch_size,
            "epochs": self.epochs, "seed": self.seed, "method": self.method,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


@dataclass
class TrainingTrace:
    losses: list[float] = field(default_factory=list)
    metrics: list[float] = field(default_factory=list)
    metric_name: str = "metric"
    wall_clock: float = 0.0
    seed: int = 0

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", self.metric_name])
            for i, (loss, metric) in enumerate(zip(self.losses, self.metrics)):
                writer.writerow([i, repr(loss), repr(metric)])

    @classmethod
    def read_csv(cls, path) -> "TrainingTrace":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        header = rows[0]
        losses = [float(r[1]) for r in rows[1:]]
        metrics = [float(r[2]) for r in rows[1:]]
        return cls(losses=losses, metrics=metrics, metric_name=header[2])


@dataclass
class TargetModel:
    arch: str
    module: nn.Module
    class_count: int
    input_size: int


class SmallCnn(nn.Module):
    """Desk-scale target: three conv blocks and a two-layer head."""

    def __init__(self, class_count: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 24, 3, padding=1),
            nn.BatchNorm2d(24),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(24, 48, 3, padding=1),
            nn.BatchNorm2d(48),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(48, 96, 3, padding=1),
            nn.BatchNorm2d(96),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(4),
        )
        self.classifier = nn.Sequential(
            nn.Flatten(1),
            nn.Linear(96 * 16, 256),
            nn.ReLU(inplace=True),
            nn.Linear(256, class_count),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x))


def build_target(arch: str, class_count: int, input_size: int, seed: int = 0) -> TargetModel:
    """Construct an untrained target classifier; deterministic under seed."""
    if arch not in TARGET_ARCHS:
        raise ValueError(f"unknown target architecture {arch!r}; expected {TARGET_ARCHS}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        if arch == "small_cnn":
            module = SmallCnn(class_count)
        elif arch == "resnet_style":
            module = torchvision.models.resnet18(weights=None, num_classes=class_count)
        elif arch == "vgg_style":
            module = torchvision.models.vgg16(weights=None, num_classes=class_count)
        else:
            module = torchvision.models.googlenet(
                weights=None, num_classes=class_count, aux_logits=False,
                init_weights=True,
            )
    return TargetModel(arch, module, class_count, input_size)


def _symmetric_images(dataset: LabeledDataset) -> torch.Tensor:
    batch = dataset.images.to_symmetric()
    if batch.channels != 3:
        raise ValueError("training images must be 3-channel; channelize first")
    return batch.data


def train_camouflager(
    model: CamouflagerModel,
    hijackee: LabeledDataset,
    hijacking: LabeledDataset,
    F: FeatureExtractor,
    loss_cfg: LossConfig,
    opt_cfg: OptimizerConfig,
) -> tuple[CamouflagerModel, TrainingTrace]:
    """Per epoch: draw a fresh hijackee/hijacking pairing, then minibatch
    Adam steps on the composite loss. Deterministic under opt_cfg.seed."""
    x_o_all = _symmetric_images(hijackee)
    x_h_all = _symmetric_images(hijacking)
    for name, t in (("hijackee", x_o_all), ("hijacking", x_h_all)):
        if t.shape[-1] != model.input_size or t.shape[-2] != model.input_size:
            raise ValueError(
                f"{name} images are {t.shape[-2]}x{t.shape[-1]}, model expects "
                f"{model.input_size}"
            )
    fingerprint_before = F.parameters_fingerprint()
    updating = opt_cfg.lr > 0
    trace = TrainingTrace(metric_name="visual_loss", seed=opt_cfg.seed)
    start = time.monotonic()
    with torch.random.fork_rng():
        torch.manual_seed(opt_cfg.seed)
        opt = torch.optim.Adam(model.parameters(), lr=opt_cfg.lr)
        model.train(updating)
        for epoch in range(opt_cfg.epochs):
            plan = pair_epoch(hijackee, hijacking, seed=opt_cfg.seed + epoch)
            o_idx = torch.as_tensor(plan.hijackee_indices)
            h_idx = torch.as_tensor(plan.hijacking_indices)
            epoch_loss, epoch_visual, batches = 0.0, 0.0, 0
            for s in range(0, len(plan), opt_cfg.batch_size):
                x_o = x_o_all[o_idx[s : s + opt_cfg.batch_size]]
                x_h = x_h_all[h_idx[s : s + opt_cfg.batch_size]]
                opt.zero_grad()
                x_c = model(x_o, x_h)
                loss = composite_loss(x_c, x_o, x_h, F, loss_cfg)
                if not torch.isfinite(loss):
                    raise DivergenceError(epoch, float(loss))
                if updating:
                    loss.backward()
                    opt.step()
                epoch_loss += float(loss.detach())
                epoch_visual += float((x_c - x_o).abs().mean().detach())
                batches += 1
            trace.losses.append(epoch_loss / batches)
            trace.metrics.append(epoch_visual / batches)
    model.eval()
    trace.wall_clock = time.monotonic() - start
    if F.parameters_fingerprint() != fingerprint_before:
        raise RuntimeError("feature extractor parameters moved during training")
    return model, trace


def train_target(
    arch: str | TargetModel,
    dataset: LabeledDataset,
    opt_cfg: OptimizerConfig,
) -> tuple[TargetModel, TrainingTrace]:
    """Cross-entropy training of a target classifier.

    The same routine trains clean and poisoned models; role validation is the
    only place the dataset role is read.
    """
    if dataset.role not in (DatasetRole.ORIGINAL, DatasetRole.POISONED):
        raise ValueError(f"target models train on Original or Poisoned data, got {dataset.role}")
    images = _symmetric_images(dataset)
    labels = dataset.labels
    input_size = dataset.images.height
    if isinstance(arch, TargetModel):
        target = arch
        if target.input_size != input_size:
            raise ValueError("dataset size does not match the supplied model")
    else:
        target = build_target(arch, dataset.class_count, input_size, seed=opt_cfg.seed)
    updating = opt_cfg.lr > 0
    trace = TrainingTrace(metric_name="train_accuracy", seed=opt_cfg.seed)
    start = time.monotonic()
    n = images.shape[0]
    with torch.random.fork_rng():
        torch.manual_seed(opt_cfg.seed)
        opt = torch.optim.Adam(target.module.parameters(), lr=opt_cfg.lr)
        target.module.train(updating)
        for epoch in range(opt_cfg.epochs):
            order = torch.randperm(n)
            epoch_loss, correct, batches = 0.0, 0, 0
            for s in range(0, n, opt_cfg.batch_size):
                idx = order[s : s + opt_cfg.batch_size]
                opt.zero_grad()
                logits = target.module(images[idx])
                loss = TF.cross_entropy(logits, labels[idx])
                if not torch.isfinite(loss):
                    raise DivergenceError(epoch, float(loss))
                if updating:
                    loss.backward()
                    opt.step()
                epoch_loss += float(loss.detach())
                correct += int((logits.detach().argmax(dim=1) == labels[idx]).sum())
                batches += 1
            trace.losses.append(epoch_loss / batches)
            trace.metrics.append(correct / n)
    target.module.eval()
    trace.wall_clock = time.monotonic() - start
    return target, trace


def predict(model: TargetModel, batch: ImageBatch, chunk: int = 512) -> torch.Tensor:
    """Predicted labels: argmax over the probability vector, ties to the
    lowest index."""
    sym = batch.to_symmetric()
    if sym.channels != 3:
        raise ValueError("predict expects 3-channel images")
    if sym.height != model.input_size or sym.width != model.input_size:
        raise ValueError(
            f"batch is {sym.height}x{sym.width}, model expects {model.input_size}"
        )
    model.module.eval()
    outs = []
    with torch.no_grad():
        for s in range(0, sym.n, chunk):
            logits = model.module(sym.data[s : s + chunk])
            # numpy argmax pins the first-index tie rule
            outs.append(np.argmax(logits.numpy(), axis=1))
    if not outs:
        return torch.empty(0, dtype=torch.long)
    return torch.from_numpy(np.concatenate(outs)).long()


def save_target(model: TargetModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": TARGET_FORMAT,
            "arch": model.arch,
            "class_count": model.class_count,
            "input_size": model.input_size,
            "state_dict": model.module.state_dict(),
        },
        path,
    )


def load_target(path) -> TargetModel:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != TARGET_FORMAT:
        raise ValueError(f"{path} is not a target-model checkpoint")
    model = build_target(payload["arch"], payload["class_count"], payload["input_size"])
    model.module.load_state_dict(payload["state_dict"])
    model.module.eval()
    return model
