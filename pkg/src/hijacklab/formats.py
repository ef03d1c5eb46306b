"""On-disk dataset adapters: MNIST idx files, CIFAR-10 binary batches,
CelebA-style image directory with an attribute table, and a plain-text
manifest for provenance.

Readers accept the standard public layouts; writers exist so synthetic
stand-in datasets can be materialized in the same formats and round-tripped.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import DatasetRole, ImageBatch, LabeledDataset, build_celeba_labels

IDX_MAGIC_IMAGES = 2051
IDX_MAGIC_LABELS = 2049

CELEBA_ATTR_COLUMNS = ("Heavy_Makeup", "Mouth_Slightly_Open", "Smiling")


def _open_maybe_gzip(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def read_idx_images(path) -> np.ndarray:
    """Read an idx3-ubyte image file -> uint8 array [N, H, W]."""
    path = Path(path)
    with _open_maybe_gzip(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != IDX_MAGIC_IMAGES:
            raise ValueError(f"{path}: bad idx image magic {magic}")
        buf = f.read(n * rows * cols)
    if len(buf) != n * rows * cols:
        raise ValueError(f"{path}: truncated idx image file")
    return np.frombuffer(buf, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    """Read an idx1-ubyte label file -> uint8 array [N]."""
    path = Path(path)
    with _open_maybe_gzip(path, "rb") as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic != IDX_MAGIC_LABELS:
            raise ValueError(f"{path}: bad idx label magic {magic}")
        buf = f.read(n)
    if len(buf) != n:
        raise ValueError(f"{path}: truncated idx label file")
    return np.frombuffer(buf, dtype=np.uint8)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"expected [N, H, W] uint8, got shape {images.shape}")
    n, rows, cols = images.shape
    path = Path(path)
    with _open_maybe_gzip(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ValueError(f"expected [N] uint8, got shape {labels.shape}")
    path = Path(path)
    with _open_maybe_gzip(path, "wb") as f:
        f.write(struct.pack(">II", IDX_MAGIC_LABELS, labels.shape[0]))
        f.write(labels.tobytes())


def load_mnist_style(images_path, labels_path, class_count: int = 10) -> LabeledDataset:
    """Load an idx image/label pair as a single-channel [0, 1] dataset."""
    images = read_idx_images(images_path).astype(np.float32) / 255.0
    labels = read_idx_labels(labels_path).astype(np.int64)
    data = torch.from_numpy(images).unsqueeze(1)
    return LabeledDataset(ImageBatch(data, "unit"), torch.from_numpy(labels),
                          DatasetRole.ORIGINAL, class_count)


def read_cifar_batch(path) -> tuple[np.ndarray, np.ndarray]:
    """Read one CIFAR-10 binary batch -> (uint8 images [N, 3, 32, 32], labels [N]).

    Record layout: 1 label byte followed by 3072 pixel bytes (R, G, B planes).
    """
    path = Path(path)
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    record = 1 + 3 * 32 * 32
    if raw.size % record != 0:
        raise ValueError(f"{path}: size {raw.size} is not a whole number of records")
    raw = raw.reshape(-1, record)
    labels = raw[:, 0].astype(np.int64)
    images = raw[:, 1:].reshape(-1, 3, 32, 32)
    return images, labels


def write_cifar_batch(path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 4 or images.shape[1:] != (3, 32, 32):
        raise ValueError(f"expected [N, 3, 32, 32] uint8, got shape {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ValueError("labels must align with images")
    records = np.concatenate(
        [labels[:, None], images.reshape(images.shape[0], -1)], axis=1
    )
    Path(path).write_bytes(records.astype(np.uint8).tobytes())


def load_cifar_style(paths, class_count: int = 10) -> LabeledDataset:
    """Load one or more CIFAR binary batches as a 3-channel [0, 1] dataset."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    chunks = [read_cifar_batch(p) for p in paths]
    images = np.concatenate([c[0] for c in chunks]).astype(np.float32) / 255.0
    labels = np.concatenate([c[1] for c in chunks])
    return LabeledDataset(
        ImageBatch(torch.from_numpy(images), "unit"),
        torch.from_numpy(labels),
        DatasetRole.ORIGINAL,
        class_count,
    )


def read_celeba_attrs(attr_path) -> tuple[list[str], list[str], np.ndarray]:
    """Parse a CelebA list_attr file.

    Layout: line 1 = image count, line 2 = attribute names, then one line
    per image: filename followed by +-1 flags. Returns (filenames,
    attribute names, flags as 0/1 array).
    """
    attr_path = Path(attr_path)
    lines = attr_path.read_text().splitlines()
    if len(lines) < 2:
        raise ValueError(f"{attr_path}: too short for an attribute table")
    count = int(lines[0].strip())
    names = lines[1].split()
    files, rows = [], []
    for line in lines[2 : 2 + count]:
        parts = line.split()
        if len(parts) != len(names) + 1:
            raise ValueError(f"{attr_path}: malformed row {parts[:2]}...")
        files.append(parts[0])
        rows.append([1 if int(v) > 0 else 0 for v in parts[1:]])
    if len(files) != count:
        raise ValueError(f"{attr_path}: header promised {count} rows, found {len(files)}")
    return files, names, np.asarray(rows, dtype=np.int64)


def write_celeba_attrs(attr_path, files, names, flags: np.ndarray) -> None:
    flags = np.asarray(flags)
    lines = [str(len(files)), " ".join(names)]
    for fname, row in zip(files, flags):
        rendered = " ".join("1" if v else "-1" for v in row)
        lines.append(f"{fname} {rendered}")
    Path(attr_path).write_text("\n".join(lines) + "\n")


def load_celeba_style(
    image_dir, attr_path, limit: int | None = None
) -> LabeledDataset:
    """Load a CelebA-style directory as a 3-channel [0, 1] dataset.

    Labels concatenate the (Heavy_Makeup, Mouth_Slightly_Open, Smiling)
    columns into 8 classes. Images may vary in size on disk; they are
    returned at their stored size, which therefore must be uniform.
    """
    image_dir = Path(image_dir)
    files, names, flags = read_celeba_attrs(attr_path)
    try:
        cols = [names.index(c) for c in CELEBA_ATTR_COLUMNS]
    except ValueError as exc:
        raise ValueError(f"attribute table lacks a required column: {exc}") from exc
    if limit is not None:
        files, flags = files[:limit], flags[:limit]
    arrays = []
    for fname in files:
        with Image.open(image_dir / fname) as im:
            arrays.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
    images = np.stack(arrays).astype(np.float32) / 255.0
    data = torch.from_numpy(images).permute(0, 3, 1, 2).contiguous()
    labels = build_celeba_labels(flags[:, cols])
    return LabeledDataset(ImageBatch(data, "unit"), labels, DatasetRole.ORIGINAL, 8)


def write_celeba_style(image_dir, attr_path, dataset: LabeledDataset,
                       names=CELEBA_ATTR_COLUMNS) -> None:
    """Materialize a dataset in CelebA layout: PNG files + attribute table.

    The dataset's 8-class labels are decomposed back into the three binary
    attribute columns.
    """
    image_dir = Path(image_dir)
    image_dir.mkdir(parents=True, exist_ok=True)
    if dataset.class_count != 8:
        raise ValueError("CelebA layout encodes exactly 8 classes (3 binary attributes)")
    imgs = (dataset.images.to_unit().data.clamp(0, 1) * 255.0).round().to(torch.uint8)
    files = []
    for i in range(len(dataset)):
        fname = f"{i + 1:06d}.png"
        arr = imgs[i].permute(1, 2, 0).numpy()
        Image.fromarray(arr, mode="RGB").save(image_dir / fname)
        files.append(fname)
    labels = dataset.labels.numpy()
    flags = np.stack([(labels >> 2) & 1, (labels >> 1) & 1, labels & 1], axis=1)
    write_celeba_attrs(attr_path, files, list(names), flags)


def write_manifest(path, entries: dict) -> None:
    """Write a provenance manifest: one `key = value` line per entry."""
    lines = [f"{k} = {entries[k]}" for k in entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"manifest line without '=': {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
