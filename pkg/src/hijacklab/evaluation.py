"""Metrics and the stealthiness protocol: utility, attack success rate,
non-camouflaged accuracy, batch-local Euclidean stealth distance, t-SNE
embeddings, and prediction-entropy statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.manifold import TSNE

from .camouflager import CamouflagerModel, camouflage_in_chunks
from .data import DatasetRole, ImageBatch, LabeledDataset, LabelMapping
from .training import TargetModel, predict

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalReport:
    utility: float
    clean_utility: float
    asr: float
    non_camouflaged_acc: float
    naive_asr: float | None = None
    stealth_distance_camouflaged: float | None = None
    stealth_distance_hijacking: float | None = None
    stealth_value_range: str = "symmetric"
    entropy_stats: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("utility", "clean_utility", "asr", "non_camouflaged_acc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a fraction in [0, 1], got {v}")
        if self.naive_asr is not None and not 0.0 <= self.naive_asr <= 1.0:
            raise ValueError("naive_asr must be a fraction in [0, 1]")
        for name in ("stealth_distance_camouflaged", "stealth_distance_hijacking"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "utility": self.utility,
            "clean_utility": self.clean_utility,
            "asr": self.asr,
            "naive_asr": self.naive_asr,
            "non_camouflaged_acc": self.non_camouflaged_acc,
            "stealth_distance_camouflaged": self.stealth_distance_camouflaged,
            "stealth_distance_hijacking": self.stealth_distance_hijacking,
            "stealth_value_range": self.stealth_value_range,
            "entropy_stats": self.entropy_stats,
            "seeds": self.seeds,
        }

    def write_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported report schema_version {d.get('schema_version')!r}"
            )
        fields_ = {k: v for k, v in d.items() if k != "schema_version"}
        return cls(**fields_)

    @classmethod
    def read_json(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def utility(model: TargetModel, clean_test: LabeledDataset) -> float:
    """Accuracy of the model on the original task's clean test set."""
    if clean_test.role != DatasetRole.ORIGINAL:
        raise ValueError(f"utility expects an Original-role test set, got {clean_test.role}")
    if len(clean_test) == 0:
        raise ValueError("utility over an empty test set is undefined")
    preds = predict(model, clean_test.images)
    return float((preds == clean_test.labels).float().mean())


def _partner_indices(n_queries: int, hijackee_size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, hijackee_size, size=n_queries)


def camouflage_queries(
    camouflager: CamouflagerModel,
    hijackee: LabeledDataset,
    x_h: ImageBatch,
    seed: int = 0,
) -> ImageBatch:
    """Camouflage a query batch against uniformly drawn hijackee partners."""
    if len(hijackee) == 0:
        raise ValueError("hijackee source is empty")
    partners = _partner_indices(x_h.n, len(hijackee), seed)
    x_o = hijackee.images.to_symmetric().subset(partners)
    return camouflage_in_chunks(camouflager, x_o, x_h.to_symmetric())


def attack_success_rate(
    camouflager: CamouflagerModel | None,
    model: TargetModel,
    mapping: LabelMapping,
    hijack_test: LabeledDataset,
    hijackee: LabeledDataset | None = None,
    seed: int = 0,
) -> float:
    """Accuracy on the hijacking test set, queried the way the adversary
    queries: camouflaged when a Camouflager is supplied, raw otherwise.
    Predictions outside the mapping's image count as incorrect."""
    if hijack_test.role != DatasetRole.HIJACKING:
        raise ValueError(f"expected a Hijacking-role test set, got {hijack_test.role}")
    if len(hijack_test) == 0:
        raise ValueError("empty hijacking test set")
    if camouflager is not None:
        if hijackee is None:
            raise ValueError("camouflage attacks need a hijackee sample source")
        queries = camouflage_queries(camouflager, hijackee, hijack_test.images, seed)
    else:
        queries = hijack_test.images.to_symmetric()
    preds = predict(model, queries)
    inverted, valid = mapping.invert_labels(preds)
    correct = valid & (inverted == hijack_test.labels)
    return float(correct.float().mean())


def non_camouflaged_accuracy(
    model: TargetModel, mapping: LabelMapping, hijack_test: LabeledDataset
) -> float:
    """Accuracy on raw, uncamouflaged hijacking samples.

    A stealthy hijacked model scores near 1/class_count here.
    """
    if hijack_test.role != DatasetRole.HIJACKING:
        raise ValueError(f"expected a Hijacking-role test set, got {hijack_test.role}")
    if len(hijack_test) == 0:
        raise ValueError("empty hijacking test set")
    preds = predict(model, hijack_test.images)
    inverted, valid = mapping.invert_labels(preds)
    correct = valid & (inverted == hijack_test.labels)
    return float(correct.float().mean())


def _batched_min_distances(
    probe: torch.Tensor, reference: torch.Tensor, batch: int
) -> torch.Tensor:
    """For aligned batches of `batch` rows, each probe row's Euclidean
    distance to its nearest reference row within the same batch."""
    if probe.shape[0] != reference.shape[0]:
        raise ValueError("probe and reference sample counts must match")
    if probe.shape[0] % batch != 0:
        raise ValueError("sample count must be divisible by the batch size")
    minima = []
    for s in range(0, probe.shape[0], batch):
        d = torch.cdist(
            probe[s : s + batch].double(), reference[s : s + batch].double()
        )
        minima.append(d.min(dim=1).values)
    return torch.cat(minima)


def euclidean_stealthiness(
    probe: LabeledDataset,
    reference: LabeledDataset,
    sample_n: int = 1000,
    batch: int = 100,
    seed: int = 0,
) -> float:
    """Mean nearest-neighbor Euclidean distance, batch-local.

    Draws sample_n samples from each set, partitions them into aligned
    batches of `batch`, and searches each probe's nearest reference only
    within its own batch. The batch-local search is part of the metric's
    semantics, not an optimization shortcut. When a set holds fewer than
    sample_n samples the draw shrinks to the largest feasible multiple
    of `batch`.
    """
    if sample_n % batch != 0:
        raise ValueError("sample_n must be divisible by batch")
    if len(probe) < batch or len(reference) < batch:
        raise ValueError(f"both datasets need at least batch={batch} samples")
    if probe.images.data.shape[1:] != reference.images.data.shape[1:]:
        raise ValueError("probe and reference image shapes must match")
    available = min(sample_n, len(probe), len(reference))
    n = (available // batch) * batch
    rng_p = np.random.default_rng(seed)
    rng_r = np.random.default_rng(seed)
    idx_p = rng_p.choice(len(probe), size=n, replace=False)
    idx_r = rng_r.choice(len(reference), size=n, replace=False)
    flat_p = probe.images.data[torch.as_tensor(idx_p)].flatten(1)
    flat_r = reference.images.data[torch.as_tensor(idx_r)].flatten(1)
    return float(_batched_min_distances(flat_p, flat_r, batch).mean())


@dataclass
class TsneResult:
    coords: np.ndarray  # [N, 2]
    roles: list[str]
    kl_divergence: float


def tsne_embed(
    batches: dict[str, ImageBatch],
    dims: int = 2,
    seed: int = 0,
    perplexity: float = 30.0,
    max_iter: int = 1000,
) -> TsneResult:
    """2-D t-SNE of up to a few hundred samples, tagged by role."""
    if dims != 2:
        raise ValueError("only 2-D embeddings are supported")
    if not batches:
        raise ValueError("no samples given")
    mats, roles = [], []
    for role, batch in batches.items():
        mats.append(batch.data.flatten(1).numpy().astype(np.float64))
        roles.extend([role] * batch.n)
    x = np.concatenate(mats)
    if x.shape[0] <= perplexity:
        raise ValueError("perplexity must be smaller than the sample count")
    tsne = TSNE(
        n_components=2,
        perplexity=perplexity,
        init="pca",
        random_state=seed,
        max_iter=max_iter,
    )
    coords = tsne.fit_transform(x)
    return TsneResult(coords=coords, roles=roles, kl_divergence=float(tsne.kl_divergence_))


def prediction_entropy(prob) -> float:
    """Shannon entropy, natural log, with 0 * ln 0 = 0."""
    p = np.asarray(prob, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("empty probability vector")
    if (p < -1e-12).any():
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    p = np.clip(p, 0.0, None)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def _softmax_entropies(model: TargetModel, images: ImageBatch, chunk: int = 512) -> np.ndarray:
    sym = images.to_symmetric()
    model.module.eval()
    vals = []
    with torch.no_grad():
        for s in range(0, sym.n, chunk):
            logits = model.module(sym.data[s : s + chunk])
            logp = torch.log_softmax(logits.double(), dim=1)
            p = logp.exp()
            vals.append(-(p * logp).sum(dim=1).numpy())
    if not vals:
        return np.empty(0)
    return np.concatenate(vals)


def entropy_distribution(model: TargetModel, dataset: LabeledDataset | ImageBatch):
    """Per-sample prediction entropies plus summary statistics."""
    images = dataset.images if isinstance(dataset, LabeledDataset) else dataset
    ent = _softmax_entropies(model, images)
    if ent.size == 0:
        stats = {k: math.nan for k in ("min", "max", "mean", "q25", "median", "q75")}
    else:
        stats = {
            "min": float(ent.min()),
            "max": float(ent.max()),
            "mean": float(ent.mean()),
            "q25": float(np.quantile(ent, 0.25)),
            "median": float(np.quantile(ent, 0.5)),
            "q75": float(np.quantile(ent, 0.75)),
        }
    return ent, stats


def entropy_histogram_overlap(a: np.ndarray, b: np.ndarray, bins: int = 30) -> float:
    """Overlap coefficient of two entropy samples' normalized histograms.

    1.0 means identical histograms, 0.0 disjoint support.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("need samples on both sides")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    return float(np.minimum(pa, pb).sum())
