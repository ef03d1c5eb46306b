"""Dataset containers and the operations that assemble an attack's data.

All images travel as ``ImageBatch`` (dense float tensors, NCHW) with an
explicit value-range tag: ``"unit"`` for raw [0, 1] pixels, ``"symmetric"``
for [-1, 1] pixels matching the camouflager decoder's output range.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .errors import CapacityError

RANGE_BOUNDS = {"unit": (0.0, 1.0), "symmetric": (-1.0, 1.0)}


class DatasetRole(enum.Enum):
    ORIGINAL = "original"
    HIJACKEE = "hijackee"
    HIJACKING = "hijacking"
    CAMOUFLAGED = "camouflaged"
    POISONED = "poisoned"


@dataclass
class ImageBatch:
    """Dense batch of images, shape [N, C, H, W], C in {1, 3}.

    ``value_range`` declares which interval every element must lie in.
    """

    data: torch.Tensor
    value_range: str = "unit"

    def __post_init__(self):
        if not isinstance(self.data, torch.Tensor):
            self.data = torch.as_tensor(np.asarray(self.data), dtype=torch.float32)
        if self.data.dim() != 4:
            raise ValueError(f"expected [N, C, H, W], got shape {tuple(self.data.shape)}")
        if self.value_range not in RANGE_BOUNDS:
            raise ValueError(f"unknown value_range {self.value_range!r}")
        c = self.data.shape[1]
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if self.data.numel() > 0:
            lo, hi = RANGE_BOUNDS[self.value_range]
            dmin, dmax = self.data.min().item(), self.data.max().item()
            if dmin < lo - 1e-6 or dmax > hi + 1e-6:
                raise ValueError(
                    f"values [{dmin:.4f}, {dmax:.4f}] escape declared "
                    f"range {self.value_range!r} = [{lo}, {hi}]"
                )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    def to_symmetric(self) -> "ImageBatch":
        """Affinely map [0, 1] pixels onto [-1, 1]."""
        if self.value_range == "symmetric":
            return self
        return ImageBatch(self.data * 2.0 - 1.0, "symmetric")

    def to_unit(self) -> "ImageBatch":
        if self.value_range == "unit":
            return self
        return ImageBatch((self.data + 1.0) * 0.5, "unit")

    def subset(self, indices) -> "ImageBatch":
        idx = torch.as_tensor(np.asarray(indices), dtype=torch.long)
        return ImageBatch(self.data[idx], self.value_range)


@dataclass
class LabeledDataset:
    """Images plus integer labels plus the role the dataset plays in an attack."""

    images: ImageBatch
    labels: torch.Tensor
    role: DatasetRole
    class_count: int

    def __post_init__(self):
        if not isinstance(self.labels, torch.Tensor):
            self.labels = torch.as_tensor(np.asarray(self.labels), dtype=torch.long)
        self.labels = self.labels.long()
        if self.labels.dim() != 1 or self.labels.shape[0] != self.images.n:
            raise ValueError(
                f"labels shape {tuple(self.labels.shape)} does not match "
                f"{self.images.n} images"
            )
        if self.class_count <= 0:
            raise ValueError("class_count must be positive")
        if self.labels.numel() > 0:
            lmin, lmax = self.labels.min().item(), self.labels.max().item()
            if lmin < 0 or lmax >= self.class_count:
                raise ValueError(
                    f"labels in [{lmin}, {lmax}] exceed class_count {self.class_count}"
                )

    def __len__(self) -> int:
        return self.images.n

    def subset(self, indices, role: DatasetRole | None = None) -> "LabeledDataset":
        idx = torch.as_tensor(np.asarray(indices), dtype=torch.long)
        return LabeledDataset(
            self.images.subset(idx), self.labels[idx], role or self.role, self.class_count
        )

    def with_role(self, role: DatasetRole) -> "LabeledDataset":
        return replace(self, role=role)


@dataclass(frozen=True)
class LabelMapping:
    """Injective assignment of hijacking labels into original labels.

    ``forward[i]`` is the original label that hijacking label ``i`` is
    trained and predicted as. Frozen for the lifetime of an attack run.
    """

    forward: tuple[int, ...]
    original_count: int
    hijacking_count: int

    def __post_init__(self):
        if self.hijacking_count > self.original_count:
            raise CapacityError(
                f"hijacking task has {self.hijacking_count} labels but the original "
                f"task only {self.original_count}; a flat mapping cannot be injective. "
                "Use the hierarchical attack variant for tasks with more labels."
            )
        if len(self.forward) != self.hijacking_count:
            raise ValueError("forward must assign every hijacking label")
        if any(t < 0 or t >= self.original_count for t in self.forward):
            raise ValueError("forward targets must be original label indices")
        if len(set(self.forward)) != len(self.forward):
            raise ValueError("mapping must be injective")

    def map_labels(self, labels: torch.Tensor) -> torch.Tensor:
        table = torch.as_tensor(self.forward, dtype=torch.long)
        return table[labels.long()]

    def invert_label(self, original_label: int) -> int | None:
        """Inverse lookup; None when the original label is outside the image."""
        try:
            return self.forward.index(int(original_label))
        except ValueError:
            return None

    def invert_labels(self, original_labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Vectorized inverse. Returns (hijacking labels, valid mask).

        Labels outside the mapping's image come back as -1 with mask False;
        callers count those as incorrect predictions.
        """
        inverse = torch.full((self.original_count,), -1, dtype=torch.long)
        for h, o in enumerate(self.forward):
            inverse[o] = h
        out = inverse[original_labels.long()]
        return out, out >= 0


@dataclass(frozen=True)
class PairingPlan:
    """One epoch's random pairing of hijackee partners to hijacking samples.

    Every hijacking index appears exactly once; hijackee partners are drawn
    uniformly with replacement, so the pairing is many-to-many.
    """

    hijackee_indices: tuple[int, ...]
    hijacking_indices: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if len(self.hijackee_indices) != len(self.hijacking_indices):
            raise ValueError("pair lists must align")

    def __len__(self) -> int:
        return len(self.hijacking_indices)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.hijackee_indices, self.hijacking_indices))


def rescale_and_channelize(img: ImageBatch, target_size: int) -> ImageBatch:
    """Bilinearly resize to target_size x target_size and force 3 channels.

    Single-channel inputs are replicated across the three channels, so the
    output satisfies channel0 == channel1 == channel2 exactly.
    """
    if target_size <= 0:
        raise ValueError("target_size must be positive")
    data = img.data
    if img.channels == 1:
        data = data.repeat(1, 3, 1, 1)
    elif img.channels != 3:
        raise ValueError(f"cannot channelize {img.channels}-channel images")
    if img.height != target_size or img.width != target_size:
        data = torch.nn.functional.interpolate(
            data, size=(target_size, target_size), mode="bilinear", align_corners=False
        )
        # bilinear output is a convex combination of inputs but float round-off
        # can poke a hair outside the declared interval
        lo, hi = RANGE_BOUNDS[img.value_range]
        data = data.clamp(lo, hi)
    return ImageBatch(data, img.value_range)


def build_celeba_labels(attrs) -> torch.Tensor:
    """Concatenate three binary attributes into an 8-class label.

    Column order is (Heavy Makeup, Mouth Slightly Open, Smiling);
    label = 4*a0 + 2*a1 + a2.
    """
    a = torch.as_tensor(np.asarray(attrs))
    if a.dim() != 2 or a.shape[1] != 3:
        raise ValueError(f"expected [N, 3] attributes, got {tuple(a.shape)}")
    if a.numel() > 0 and not bool(((a == 0) | (a == 1)).all()):
        raise ValueError("attributes must be binary 0/1")
    a = a.long()
    return 4 * a[:, 0] + 2 * a[:, 1] + a[:, 2]


def build_label_mapping(
    original_count: int,
    hijacking_count: int,
    order: str | Sequence[int] = "identity",
) -> LabelMapping:
    """Build the frozen label mapping used throughout one attack run.

    ``order`` is either "identity" or an explicit sequence of distinct
    original-label indices; hijacking label i maps to order[i].
    """
    if hijacking_count > original_count:
        raise CapacityError(
            f"cannot map {hijacking_count} hijacking labels into {original_count} "
            "original labels; use the hierarchical attack variant instead"
        )
    if isinstance(order, str):
        if order != "identity":
            raise ValueError(f"unknown order {order!r}")
        forward = tuple(range(hijacking_count))
    else:
        if len(order) < hijacking_count:
            raise ValueError("order must cover every hijacking label")
        forward = tuple(int(x) for x in order[:hijacking_count])
    return LabelMapping(forward, original_count, hijacking_count)


def sample_hijackee(
    original: LabeledDataset, num_classes: int, total: int, seed: int
) -> LabeledDataset:
    """Draw the hijackee dataset: `total` samples from `num_classes` random classes."""
    if num_classes > original.class_count:
        raise ValueError(
            f"num_classes {num_classes} exceeds class_count {original.class_count}"
        )
    rng = np.random.default_rng(seed)
    if total == 0:
        return original.subset(np.empty(0, dtype=np.int64), role=DatasetRole.HIJACKEE)
    chosen = rng.choice(original.class_count, size=num_classes, replace=False)
    labels = original.labels.numpy()
    pool = np.flatnonzero(np.isin(labels, chosen))
    if pool.size < total:
        raise ValueError(
            f"requested {total} hijackee samples but only {pool.size} available "
            f"in the {num_classes} chosen classes"
        )
    picked = rng.choice(pool, size=total, replace=False)
    return original.subset(np.sort(picked), role=DatasetRole.HIJACKEE)


def assemble_poisoned(
    original: LabeledDataset, camouflaged: LabeledDataset, mapping: LabelMapping
) -> LabeledDataset:
    """Append the camouflaged dataset, relabeled through the mapping, to the original.

    Original samples are carried over bit-exact and come first.
    """
    if camouflaged.role != DatasetRole.CAMOUFLAGED:
        raise ValueError(f"expected a camouflaged dataset, got role {camouflaged.role}")
    if len(camouflaged) == 0:
        return original.with_role(DatasetRole.POISONED)
    if camouflaged.images.data.shape[1:] != original.images.data.shape[1:]:
        raise ValueError(
            f"image shape mismatch: original {tuple(original.images.data.shape[1:])} "
            f"vs camouflaged {tuple(camouflaged.images.data.shape[1:])}"
        )
    if camouflaged.images.value_range != original.images.value_range:
        raise ValueError("value ranges must match before poisoning")
    if camouflaged.class_count != mapping.hijacking_count:
        raise ValueError("camouflaged labels must be hijacking-task labels")
    images = ImageBatch(
        torch.cat([original.images.data, camouflaged.images.data]),
        original.images.value_range,
    )
    labels = torch.cat([original.labels, mapping.map_labels(camouflaged.labels)])
    return LabeledDataset(images, labels, DatasetRole.POISONED, original.class_count)


def pair_epoch(
    hijackee: LabeledDataset, hijacking: LabeledDataset, seed: int
) -> PairingPlan:
    """Random many-to-many pairing for one training epoch.

    Each hijacking sample appears exactly once (in a shuffled order); its
    hijackee partner is drawn uniformly with replacement.
    """
    if len(hijackee) == 0 or len(hijacking) == 0:
        raise ValueError("cannot pair empty datasets")
    rng = np.random.default_rng(seed)
    hijacking_order = rng.permutation(len(hijacking))
    partners = rng.integers(0, len(hijackee), size=len(hijacking))
    return PairingPlan(
        tuple(int(i) for i in partners),
        tuple(int(i) for i in hijacking_order),
        seed,
    )
