"""Plot emission: t-SNE scatter by role, entropy histograms, sample grids."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import ImageBatch
from .evaluation import TsneResult

_ROLE_COLORS = {
    "original": "tab:blue",
    "hijackee": "tab:cyan",
    "hijacking": "tab:red",
    "camouflaged": "tab:green",
    "poisoned": "tab:purple",
}


def plot_tsne(result: TsneResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 5))
    roles = np.asarray(result.roles)
    for i, role in enumerate(dict.fromkeys(result.roles)):
        mask = roles == role
        color = _ROLE_COLORS.get(role, f"C{i}")
        ax.scatter(
            result.coords[mask, 0], result.coords[mask, 1],
            s=12, alpha=0.7, label=role, color=color,
        )
    ax.set_title("t-SNE of samples by role")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_entropy_hist(clean_ent, attack_ent, path, bins: int = 30) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clean_ent = np.asarray(clean_ent)
    attack_ent = np.asarray(attack_ent)
    lo = float(min(clean_ent.min(), attack_ent.min()))
    hi = float(max(clean_ent.max(), attack_ent.max()))
    if hi <= lo:
        hi = lo + 1e-6
    edges = np.linspace(lo, hi, bins + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(clean_ent, bins=edges, alpha=0.6, label="clean queries", color="tab:blue")
    ax.hist(attack_ent, bins=edges, alpha=0.6, label="attack queries", color="tab:red")
    ax.set_xlabel("prediction entropy (nats)")
    ax.set_ylabel("count")
    ax.set_title("Prediction entropy distributions")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _to_display(img: np.ndarray) -> np.ndarray:
    # CHW in [0,1] -> HWC
    return np.clip(np.transpose(img, (1, 2, 0)), 0.0, 1.0)


def plot_sample_grid(rows: dict[str, ImageBatch], path, columns: int = 8) -> Path:
    """One labeled row per batch, `columns` samples each."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(rows)
    n_rows = len(names)
    fig, axes = plt.subplots(
        n_rows, columns, figsize=(1.4 * columns, 1.5 * n_rows), squeeze=False
    )
    for r, name in enumerate(names):
        batch = rows[name].to_unit()
        for c in range(columns):
            ax = axes[r][c]
            ax.axis("off")
            if c < batch.n:
                ax.imshow(_to_display(batch.data[c].numpy()))
            if c == 0:
                ax.set_title(name, loc="left", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
