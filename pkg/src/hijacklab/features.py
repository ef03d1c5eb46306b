"""Pluggable frozen feature function F used by the semantic losses.

Three backbones: ``default_pretrained`` (MobileNetV2), ``alt_pretrained``
(MnasNet), and ``small_scratch``, a compact convolutional net trained on the
hijackee domain for offline desk-scale runs. Pretrained weights are resolved
from a local weights directory (env var ``HIJACKLAB_WEIGHTS_DIR`` overrides);
a missing weights file raises, never silently substitutes random weights.

Features are the activation of the second-to-last layer: after global
pooling, before the classifier head. Spatial feature maps are pooled to a
vector so the feature dimension is independent of input size.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as TF
import torchvision

from .data import ImageBatch, LabeledDataset
from .errors import WeightsUnavailableError

WEIGHTS_DIR_ENV = "HIJACKLAB_WEIGHTS_DIR"
DEFAULT_WEIGHTS_DIR = "weights"

BACKBONE_FILES = {
    "default_pretrained": "mobilenet_v2.pt",
    "alt_pretrained": "mnasnet1_0.pt",
    "small_scratch": "small_scratch.pt",
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

EXTRACTOR_FORMAT = "feature-extractor-v1"


@dataclass
class FeatureExtractor:
    """Frozen feature function; ``module`` maps preprocessed pixels to [N, d]."""

    name: str
    module: nn.Module
    feature_dim: int
    input_size: int
    normalize: str  # "imagenet" or "none"

    def __post_init__(self):
        if self.module is None:
            raise ValueError("uninitialized backbone")
        self.module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)

    def parameters_fingerprint(self) -> float:
        """Cheap checksum used by tests to prove parameters never move."""
        with torch.no_grad():
            return float(sum(p.double().abs().sum() for p in self.module.parameters()))


def resolve_weights_dir(weights_dir=None) -> Path:
    if weights_dir is not None:
        return Path(weights_dir)
    return Path(os.environ.get(WEIGHTS_DIR_ENV, DEFAULT_WEIGHTS_DIR))


def extract(extractor: FeatureExtractor, batch: ImageBatch) -> torch.Tensor:
    """Feature vectors [N, d]. Differentiable w.r.t. the input pixels.

    Inputs arrive in the framework's symmetric [-1, 1] range and are
    renormalized here to whatever the backbone expects.
    """
    if extractor.module is None:
        raise ValueError("uninitialized backbone")
    if batch.value_range != "symmetric":
        raise ValueError("extract expects the symmetric [-1, 1] range")
    x = batch.data
    if batch.channels == 1:
        x = x.repeat(1, 3, 1, 1)
    if x.shape[-1] != extractor.input_size or x.shape[-2] != extractor.input_size:
        x = TF.interpolate(
            x, size=(extractor.input_size, extractor.input_size),
            mode="bilinear", align_corners=False,
        )
    if extractor.normalize == "imagenet":
        mean = x.new_tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = x.new_tensor(IMAGENET_STD).view(1, 3, 1, 1)
        x = ((x + 1.0) * 0.5 - mean) / std
    elif extractor.normalize != "none":
        raise ValueError(f"unknown normalize mode {extractor.normalize!r}")
    if x.shape[0] == 0:
        return x.new_empty((0, extractor.feature_dim))
    feats = extractor.module(x)
    if feats.dim() > 2:
        feats = feats.flatten(2).mean(dim=2)
    if not torch.isfinite(feats).all():
        raise RuntimeError("feature extractor produced non-finite values")
    return feats


class SmallFeatureNet(nn.Module):
    """Compact scratch-trained classifier whose penultimate layer is F.

    Three conv blocks, global average pooling, a 128-wide penultimate linear
    layer with ReLU, then the classification head.
    """

    def __init__(self, class_count: int, in_channels: int = 3,
                 feature_dim: int = 128):
        super().__init__()
        self.class_count = class_count
        self.feature_dim = feature_dim
        self.convs = nn.Sequential(
            nn.Conv2d(in_channels, 32, 3, padding=1),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(64, 128, 3, padding=1),
            nn.BatchNorm2d(128),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.fc1 = nn.Linear(128, feature_dim)
        self.head = nn.Linear(feature_dim, class_count)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        z = self.convs(x).flatten(1)
        return TF.relu(self.fc1(z))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


class _FeatureHead(nn.Module):
    """Adapter exposing only the penultimate activation of a SmallFeatureNet."""

    def __init__(self, net: SmallFeatureNet):
        super().__init__()
        self.net = net

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net.features(x)


def train_small_extractor(
    dataset: LabeledDataset,
    epochs: int = 5,
    batch_size: int = 128,
    lr: float = 1e-3,
    seed: int = 0,
) -> FeatureExtractor:
    """Train the small_scratch backbone on the hijackee-domain dataset.

    The classification head is discarded after training; the frozen feature
    function is the 128-wide penultimate activation.
    """
    images = dataset.images.to_symmetric().data
    labels = dataset.labels
    input_size = dataset.images.height
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = SmallFeatureNet(dataset.class_count, in_channels=images.shape[1])
        opt = torch.optim.Adam(net.parameters(), lr=lr)
        net.train()
        n = images.shape[0]
        for _ in range(epochs):
            order = torch.randperm(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                opt.zero_grad()
                logits = net(images[idx])
                loss = TF.cross_entropy(logits, labels[idx])
                loss.backward()
                opt.step()
    net.eval()
    return FeatureExtractor(
        name="small_scratch",
        module=_FeatureHead(net),
        feature_dim=net.feature_dim,
        input_size=input_size,
        normalize="none",
    )


def save_extractor(extractor: FeatureExtractor, weights_dir=None) -> Path:
    """Persist a small_scratch extractor into the weights directory."""
    if extractor.name != "small_scratch":
        raise ValueError("only small_scratch extractors are saved by this framework")
    directory = resolve_weights_dir(weights_dir)
    directory.mkdir(parents=True, exist_ok=True)
    net = extractor.module.net
    path = directory / BACKBONE_FILES["small_scratch"]
    torch.save(
        {
            "format": EXTRACTOR_FORMAT,
            "name": extractor.name,
            "class_count": net.class_count,
            "in_channels": net.convs[0].in_channels,
            "feature_dim": net.feature_dim,
            "input_size": extractor.input_size,
            "state_dict": net.state_dict(),
        },
        path,
    )
    return path


def _load_state(path: Path, name: str):
    if not path.is_file():
        raise WeightsUnavailableError(
            f"no weights for backbone {name!r} at {path}; place the weights file "
            f"there or point {WEIGHTS_DIR_ENV} at the directory holding it"
        )
    return torch.load(path, map_location="cpu", weights_only=False)


def load_backbone(name: str, weights_dir=None, input_size: int = 224) -> FeatureExtractor:
    """Load a frozen feature extractor by backbone name.

    Missing weights raise WeightsUnavailableError; random weights are never
    silently substituted.
    """
    if name not in BACKBONE_FILES:
        raise ValueError(
            f"unknown backbone {name!r}; expected one of {sorted(BACKBONE_FILES)}"
        )
    path = resolve_weights_dir(weights_dir) / BACKBONE_FILES[name]
    if name == "small_scratch":
        payload = _load_state(path, name)
        if not isinstance(payload, dict) or payload.get("format") != EXTRACTOR_FORMAT:
            raise ValueError(f"{path} is not a saved feature extractor")
        net = SmallFeatureNet(
            payload["class_count"],
            in_channels=payload["in_channels"],
            feature_dim=payload["feature_dim"],
        )
        net.load_state_dict(payload["state_dict"])
        return FeatureExtractor(
            name=name,
            module=_FeatureHead(net),
            feature_dim=payload["feature_dim"],
            input_size=payload["input_size"],
            normalize="none",
        )
    state = _load_state(path, name)
    if name == "default_pretrained":
        arch = torchvision.models.mobilenet_v2(weights=None)
        arch.load_state_dict(state)
        module = nn.Sequential(arch.features, nn.AdaptiveAvgPool2d(1), nn.Flatten(1))
        dim = arch.classifier[-1].in_features
    else:  # alt_pretrained
        arch = torchvision.models.mnasnet1_0(weights=None)
        arch.load_state_dict(state)
        module = nn.Sequential(arch.layers, nn.AdaptiveAvgPool2d(1), nn.Flatten(1))
        dim = arch.classifier[-1].in_features
    return FeatureExtractor(
        name=name, module=module, feature_dim=dim,
        input_size=input_size, normalize="imagenet",
    )
