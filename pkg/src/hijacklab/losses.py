"""Loss terms and composite objectives for Camouflager training.

Three terms: visual loss (camouflaged vs hijackee pixels), semantic loss
(camouflaged vs hijacking features), adverse semantic loss (camouflaged vs
hijackee features, maximized). All reductions are means over batch and
elements so magnitudes stay comparable across batch and image sizes.

The adverse term function itself is a plain distance; maximization happens
only as subtraction inside the composite objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .data import ImageBatch
from .features import FeatureExtractor, extract

NORMS = ("L1", "L2")


@dataclass(frozen=True)
class LossConfig:
    norm: str = "L1"
    adverse: bool = False
    w_vl: float = 1.0
    w_sl: float = 1.0
    w_asl: float = 1.0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if min(self.w_vl, self.w_sl, self.w_asl) < 0:
            raise ValueError("loss weights must be non-negative")

    def identifier(self) -> str:
        base = "adverse-chameleon" if self.adverse else "chameleon"
        tag = f"{base}:{self.norm}:w={self.w_vl:g},{self.w_sl:g}"
        if self.adverse:
            tag += f",{self.w_asl:g}"
        return tag

    def to_dict(self) -> dict:
        return {
            "norm": self.norm, "adverse": self.adverse,
            "w_vl": self.w_vl, "w_sl": self.w_sl, "w_asl": self.w_asl,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


def _tensor(x) -> torch.Tensor:
    return x.data if isinstance(x, ImageBatch) else x


def _mean_distance(a: torch.Tensor, b: torch.Tensor, norm: str) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if norm == "L1":
        return (a - b).abs().mean()
    if norm == "L2":
        return ((a - b) ** 2).mean()
    raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")


def visual_loss(x_c, x_o, norm: str = "L1") -> torch.Tensor:
    """Pixel-space distance between the camouflaged and hijackee samples."""
    return _mean_distance(_tensor(x_c), _tensor(x_o), norm)


def semantic_loss(f_c: torch.Tensor, f_h: torch.Tensor, norm: str = "L1") -> torch.Tensor:
    """Feature-space distance between camouflaged and hijacking samples."""
    return _mean_distance(f_c, f_h, norm)


def adverse_semantic_loss(f_c: torch.Tensor, f_o: torch.Tensor, norm: str = "L1") -> torch.Tensor:
    """Feature-space distance between camouflaged and hijackee samples.

    Returned as a distance; the composite objective subtracts it.
    """
    return _mean_distance(f_c, f_o, norm)


def chameleon_loss(x_c, x_o, x_h, F: FeatureExtractor, cfg: LossConfig) -> torch.Tensor:
    """w_vl * visual + w_sl * semantic."""
    if cfg.adverse:
        raise ValueError("cfg.adverse must be false for the plain objective")
    f_c = extract(F, _as_batch(x_c))
    f_h = extract(F, _as_batch(x_h))
    return cfg.w_vl * visual_loss(x_c, x_o, cfg.norm) + cfg.w_sl * semantic_loss(
        f_c, f_h, cfg.norm
    )


def adverse_chameleon_loss(x_c, x_o, x_h, F: FeatureExtractor, cfg: LossConfig) -> torch.Tensor:
    """Plain objective minus w_asl * adverse term; may be negative."""
    if not cfg.adverse:
        raise ValueError("cfg.adverse must be true for the adverse objective")
    f_c = extract(F, _as_batch(x_c))
    f_h = extract(F, _as_batch(x_h))
    f_o = extract(F, _as_batch(x_o))
    value = cfg.w_vl * visual_loss(x_c, x_o, cfg.norm) + cfg.w_sl * semantic_loss(
        f_c, f_h, cfg.norm
    )
    return value - cfg.w_asl * adverse_semantic_loss(f_c, f_o, cfg.norm)


def composite_loss(x_c, x_o, x_h, F: FeatureExtractor, cfg: LossConfig) -> torch.Tensor:
    """Dispatch on cfg.adverse."""
    if cfg.adverse:
        return adverse_chameleon_loss(x_c, x_o, x_h, F, cfg)
    return chameleon_loss(x_c, x_o, x_h, F, cfg)


def _as_batch(x) -> ImageBatch:
    if isinstance(x, ImageBatch):
        return x
    return ImageBatch(x, "symmetric")
