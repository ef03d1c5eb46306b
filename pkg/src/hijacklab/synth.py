"""Synthetic stand-in datasets.

Three generators mirror the shapes of the public benchmarks the pipeline
targets: ``synth_digits`` (single-channel digit glyphs), ``synth_objects``
(3-channel textured shape classes), and ``synth_faces`` (3-channel faces
whose label concatenates three binary attributes). They exist so every
experiment runs offline and deterministically; the on-disk adapters in
``formats`` accept the real datasets unchanged.

All generators are pure functions of (arguments, seed).
"""

from __future__ import annotations

import numpy as np
import torch

from .data import DatasetRole, ImageBatch, LabeledDataset, build_celeba_labels

# seven-segment glyphs; segment letters A..G in the usual display order
_SEGMENTS = {
    "A": (0.20, 0.80, 0.06, 0.16),  # (x0, x1, y0, y1) in the unit box
    "B": (0.72, 0.84, 0.10, 0.52),
    "C": (0.72, 0.84, 0.48, 0.90),
    "D": (0.20, 0.80, 0.84, 0.94),
    "E": (0.16, 0.28, 0.48, 0.90),
    "F": (0.16, 0.28, 0.10, 0.52),
    "G": (0.20, 0.80, 0.45, 0.55),
}
_DIGIT_SEGMENTS = [
    "ABCDEF", "BC", "ABGED", "ABGCD", "FGBC",
    "AFGCD", "AFGEDC", "ABC", "ABCDEFG", "ABCDFG",
]


def _pixel_grid(side: int) -> tuple[np.ndarray, np.ndarray]:
    centers = (np.arange(side) + 0.5) / side
    return np.meshgrid(centers, centers, indexing="xy")


def _downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 mean pooling over the trailing two axes."""
    h, w = img.shape[-2], img.shape[-1]
    return img.reshape(*img.shape[:-2], h // 2, 2, w // 2, 2).mean(axis=(-3, -1))


def synth_digits(
    n: int, size: int = 32, seed: int = 0, class_count: int = 10
) -> LabeledDataset:
    """Single-channel seven-segment digit glyphs with pose and noise jitter."""
    if not 1 <= class_count <= 10:
        raise ValueError("class_count must be in 1..10")
    rng = np.random.default_rng(seed)
    hi = 2 * size
    gx, gy = _pixel_grid(hi)
    labels = rng.integers(0, class_count, size=n)
    out = np.empty((n, size, size), dtype=np.float32)
    for i in range(n):
        theta = rng.uniform(-0.18, 0.18)
        scale = rng.uniform(0.75, 1.0)
        tx, ty = rng.uniform(-0.08, 0.08, size=2)
        grow = rng.uniform(0.0, 0.03)
        # map pixel coords back into the glyph frame
        cx, cy = gx - 0.5 - tx, gy - 0.5 - ty
        cos_t, sin_t = np.cos(-theta), np.sin(-theta)
        ux = (cos_t * cx - sin_t * cy) / scale + 0.5
        uy = (sin_t * cx + cos_t * cy) / scale + 0.5
        mask = np.zeros_like(ux, dtype=bool)
        for seg in _DIGIT_SEGMENTS[labels[i]]:
            x0, x1, y0, y1 = _SEGMENTS[seg]
            mask |= (
                (ux >= x0 - grow) & (ux <= x1 + grow)
                & (uy >= y0 - grow) & (uy <= y1 + grow)
            )
        fg = rng.uniform(0.70, 1.0)
        bg = rng.uniform(0.0, 0.08)
        img = np.where(mask, fg, bg)
        img = img + rng.normal(0.0, 0.04, size=img.shape)
        out[i] = np.clip(_downsample2(img), 0.0, 1.0)
    data = torch.from_numpy(out).unsqueeze(1)
    return LabeledDataset(
        ImageBatch(data, "unit"),
        torch.from_numpy(labels.astype(np.int64)),
        DatasetRole.ORIGINAL,
        class_count,
    )


def _object_mask(cls: int, ux: np.ndarray, uy: np.ndarray, rng) -> np.ndarray:
    """Shape mask for one of the ten object classes, coords in the unit box."""
    if cls == 0:  # disk
        r = rng.uniform(0.24, 0.34)
        return (ux - 0.5) ** 2 + (uy - 0.5) ** 2 <= r * r
    if cls == 1:  # ring
        r = rng.uniform(0.26, 0.36)
        w = rng.uniform(0.07, 0.11)
        d2 = (ux - 0.5) ** 2 + (uy - 0.5) ** 2
        return (d2 <= r * r) & (d2 >= (r - w) ** 2)
    if cls == 2:  # horizontal stripes
        period = rng.uniform(0.18, 0.30)
        phase = rng.uniform(0, period)
        return ((uy + phase) % period) < period * 0.5
    if cls == 3:  # vertical stripes
        period = rng.uniform(0.18, 0.30)
        phase = rng.uniform(0, period)
        return ((ux + phase) % period) < period * 0.5
    if cls == 4:  # diagonal stripes
        period = rng.uniform(0.20, 0.34)
        phase = rng.uniform(0, period)
        return ((ux + uy + phase) % period) < period * 0.5
    if cls == 5:  # checkerboard
        cell = rng.uniform(0.20, 0.30)
        return ((ux // cell).astype(int) + (uy // cell).astype(int)) % 2 == 0
    if cls == 6:  # filled triangle, apex up
        h = rng.uniform(0.55, 0.75)
        y0 = 0.5 + h / 2
        return (uy <= y0) & (uy >= y0 - h) & (np.abs(ux - 0.5) <= (y0 - uy) * 0.55)
    if cls == 7:  # plus-shaped cross
        w = rng.uniform(0.09, 0.14)
        arm = rng.uniform(0.30, 0.40)
        horiz = (np.abs(uy - 0.5) <= w) & (np.abs(ux - 0.5) <= arm)
        vert = (np.abs(ux - 0.5) <= w) & (np.abs(uy - 0.5) <= arm)
        return horiz | vert
    if cls == 8:  # two disjoint blobs
        r = rng.uniform(0.13, 0.18)
        off = rng.uniform(0.18, 0.24)
        left = (ux - (0.5 - off)) ** 2 + (uy - 0.5) ** 2 <= r * r
        right = (ux - (0.5 + off)) ** 2 + (uy - 0.5) ** 2 <= r * r
        return left | right
    if cls == 9:  # hollow square frame
        half = rng.uniform(0.28, 0.36)
        w = rng.uniform(0.07, 0.11)
        ax, ay = np.abs(ux - 0.5), np.abs(uy - 0.5)
        outer = (ax <= half) & (ay <= half)
        inner = (ax <= half - w) & (ay <= half - w)
        return outer & ~inner
    raise ValueError(f"no object class {cls}")


def synth_objects(
    n: int, size: int = 32, seed: int = 0, class_count: int = 10
) -> LabeledDataset:
    """3-channel images of ten geometric object classes in random colors.

    Colors are randomized per image so only shape carries the label.
    """
    if not 1 <= class_count <= 10:
        raise ValueError("class_count must be in 1..10")
    rng = np.random.default_rng(seed)
    hi = 2 * size
    gx, gy = _pixel_grid(hi)
    labels = rng.integers(0, class_count, size=n)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        theta = rng.uniform(-0.25, 0.25)
        jx, jy = rng.uniform(-0.05, 0.05, size=2)
        cx, cy = gx - 0.5 - jx, gy - 0.5 - jy
        cos_t, sin_t = np.cos(-theta), np.sin(-theta)
        ux = cos_t * cx - sin_t * cy + 0.5
        uy = sin_t * cx + cos_t * cy + 0.5
        mask = _object_mask(labels[i], ux, uy, rng)
        bg = rng.uniform(0.0, 0.35, size=3)
        fg = rng.uniform(0.55, 1.0, size=3)
        img = np.where(mask[None], fg[:, None, None], bg[:, None, None])
        img = img + rng.normal(0.0, 0.04, size=img.shape)
        out[i] = np.clip(_downsample2(img), 0.0, 1.0)
    return LabeledDataset(
        ImageBatch(torch.from_numpy(out), "unit"),
        torch.from_numpy(labels.astype(np.int64)),
        DatasetRole.ORIGINAL,
        class_count,
    )


def _disk(ux, uy, x, y, rx, ry):
    return ((ux - x) / rx) ** 2 + ((uy - y) / ry) ** 2 <= 1.0


def synth_faces(n: int, size: int = 32, seed: int = 0):
    """3-channel cartoon faces with three binary attributes.

    Attribute columns are (makeup, mouth open, smiling); the label is their
    binary concatenation, 8 classes. Returns (dataset, attrs [n, 3]).
    """
    rng = np.random.default_rng(seed)
    hi = 2 * size
    gx, gy = _pixel_grid(hi)
    attrs = rng.integers(0, 2, size=(n, 3))
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        makeup, mouth_open, smiling = attrs[i]
        jx, jy = rng.uniform(-0.04, 0.04, size=2)
        fx, fy = 0.5 + jx, 0.52 + jy
        frx = rng.uniform(0.33, 0.38)
        fry = rng.uniform(0.40, 0.45)
        # warm skin tone, channel-ordered r > g > b
        r = rng.uniform(0.70, 0.95)
        skin = np.array([r, r * rng.uniform(0.72, 0.85), r * rng.uniform(0.55, 0.70)])
        bg = rng.uniform(0.0, 0.30, size=3)
        ux, uy = gx, gy
        img = np.where(
            _disk(ux, uy, fx, fy, frx, fry)[None],
            skin[:, None, None],
            bg[:, None, None],
        )
        eye_dy = fy - 0.14 + rng.uniform(-0.01, 0.01)
        eye_dx = 0.14 + rng.uniform(-0.01, 0.01)
        eye_r = rng.uniform(0.035, 0.05)
        eyes = _disk(ux, uy, fx - eye_dx, eye_dy, eye_r, eye_r) | _disk(
            ux, uy, fx + eye_dx, eye_dy, eye_r, eye_r
        )
        eye_color = rng.uniform(0.0, 0.15, size=3)
        img = np.where(eyes[None], eye_color[:, None, None], img)
        # mouth: thickness encodes open/closed, curvature encodes smiling
        my = fy + 0.22 + rng.uniform(-0.01, 0.01)
        half_len = rng.uniform(0.13, 0.17)
        half_th = rng.uniform(0.055, 0.075) if mouth_open else rng.uniform(0.012, 0.02)
        curv = rng.uniform(1.6, 2.2) if smiling else 0.0
        dx = ux - fx
        center_line = my - curv * dx * dx  # corners rise toward a smile
        mouth = (np.abs(dx) <= half_len) & (np.abs(uy - center_line) <= half_th)
        if makeup:
            mouth_color = np.array(
                [rng.uniform(0.85, 1.0), rng.uniform(0.0, 0.15), rng.uniform(0.1, 0.25)]
            )
        else:
            mouth_color = np.array(
                [rng.uniform(0.35, 0.5), rng.uniform(0.18, 0.3), rng.uniform(0.15, 0.25)]
            )
        img = np.where(mouth[None], mouth_color[:, None, None], img)
        if makeup:
            cheek_r = rng.uniform(0.05, 0.07)
            cheek_dy = fy + 0.08
            cheeks = _disk(ux, uy, fx - 0.2, cheek_dy, cheek_r, cheek_r) | _disk(
                ux, uy, fx + 0.2, cheek_dy, cheek_r, cheek_r
            )
            cheek_color = np.array([rng.uniform(0.9, 1.0), rng.uniform(0.4, 0.55),
                                    rng.uniform(0.55, 0.7)])
            img = np.where(cheeks[None], cheek_color[:, None, None], img)
        img = img + rng.normal(0.0, 0.03, size=img.shape)
        out[i] = np.clip(_downsample2(img), 0.0, 1.0)
    labels = build_celeba_labels(attrs)
    dataset = LabeledDataset(
        ImageBatch(torch.from_numpy(out), "unit"), labels, DatasetRole.ORIGINAL, 8
    )
    return dataset, attrs
