"""Camouflager: a two-encoder, one-decoder convolutional autoencoder.

One encoder reads the hijackee sample x_o, the other reads the hijacking
sample x_h; the decoder fuses the concatenated latents into a camouflaged
sample x_c that looks like x_o while carrying x_h's semantics. The two
encoders share architecture but never parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .data import ImageBatch

CHECKPOINT_FORMAT = "camouflager-checkpoint-v1"


@dataclass(frozen=True)
class EncoderSpec:
    """Four stride-2 convolutions, each followed by batch norm and ReLU."""

    in_channels: int = 3
    channels: tuple[int, ...] = (12, 24, 48, 96)
    kernel: int = 4
    stride: int = 2
    padding: int = 1


@dataclass(frozen=True)
class DecoderSpec:
    """Four stride-2 transposed convolutions; BN + ReLU after each except the
    last, which applies only Tanh so outputs land in (-1, 1)."""

    in_channels: int = 192  # concatenated latents, 2 x 96
    channels: tuple[int, ...] = (96, 48, 24, 3)
    kernel: int = 4
    stride: int = 2
    padding: int = 1


def build_encoder(spec: EncoderSpec = EncoderSpec()) -> nn.Sequential:
    layers = []
    prev = spec.in_channels
    for ch in spec.channels:
        layers += [
            nn.Conv2d(prev, ch, spec.kernel, spec.stride, spec.padding),
            nn.BatchNorm2d(ch),
            nn.ReLU(inplace=True),
        ]
        prev = ch
    return nn.Sequential(*layers)


def build_decoder(spec: DecoderSpec = DecoderSpec()) -> nn.Sequential:
    layers = []
    prev = spec.in_channels
    for i, ch in enumerate(spec.channels):
        layers.append(nn.ConvTranspose2d(prev, ch, spec.kernel, spec.stride, spec.padding))
        if i < len(spec.channels) - 1:
            layers += [nn.BatchNorm2d(ch), nn.ReLU(inplace=True)]
        else:
            layers.append(nn.Tanh())
        prev = ch
    return nn.Sequential(*layers)


class CamouflagerModel(nn.Module):
    """AE_C(x_o, x_h) = decoder(encoder_o(x_o) || encoder_h(x_h))."""

    def __init__(
        self,
        input_size: int,
        encoder_spec: EncoderSpec = EncoderSpec(),
        decoder_spec: DecoderSpec = DecoderSpec(),
    ):
        super().__init__()
        if input_size % 16 != 0 or input_size <= 0:
            raise ValueError(
                f"input_size must be a positive multiple of 16 (four stride-2 "
                f"layers), got {input_size}"
            )
        if decoder_spec.in_channels != 2 * encoder_spec.channels[-1]:
            raise ValueError("decoder input channels must be twice the latent width")
        self.input_size = input_size
        self.latent_channels = encoder_spec.channels[-1]
        self.encoder_spec = encoder_spec
        self.decoder_spec = decoder_spec
        self.encoder_o = build_encoder(encoder_spec)
        self.encoder_h = build_encoder(encoder_spec)
        self.decoder = build_decoder(decoder_spec)

    @property
    def latent_size(self) -> int:
        return self.input_size // 16

    def forward(self, x_o: torch.Tensor, x_h: torch.Tensor) -> torch.Tensor:
        if x_o.shape != x_h.shape:
            raise ValueError(f"batch mismatch: {tuple(x_o.shape)} vs {tuple(x_h.shape)}")
        mu_o = self.encoder_o(x_o)
        mu_h = self.encoder_h(x_h)
        return self.decoder(torch.cat([mu_o, mu_h], dim=1))


def init_camouflager(input_size: int, seed: int) -> CamouflagerModel:
    """Freshly initialized model; parameters deterministic under seed."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = CamouflagerModel(input_size)
    return model


def _check_input(model: CamouflagerModel, batch: ImageBatch, name: str) -> torch.Tensor:
    if batch.value_range != "symmetric":
        raise ValueError(f"{name} must be in the symmetric [-1, 1] range")
    if batch.channels != 3:
        raise ValueError(f"{name} must have 3 channels, got {batch.channels}")
    if batch.height != model.input_size or batch.width != model.input_size:
        raise ValueError(
            f"{name} is {batch.height}x{batch.width}, model expects "
            f"{model.input_size}x{model.input_size}"
        )
    return batch.data


def encode(encoder: nn.Module, batch: ImageBatch, input_size: int) -> torch.Tensor:
    """Inference-mode latent for one encoder half; [N, 96, S/16, S/16]."""
    if batch.value_range != "symmetric":
        raise ValueError("encoder inputs must be in the symmetric [-1, 1] range")
    if batch.channels != 3 or batch.height != input_size or batch.width != input_size:
        raise ValueError(
            f"expected [N, 3, {input_size}, {input_size}], got "
            f"{tuple(batch.data.shape)}"
        )
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            latent = encoder(batch.data)
    finally:
        encoder.train(was_training)
    if not torch.isfinite(latent).all():
        raise RuntimeError("encoder produced non-finite latent values")
    return latent


def camouflage(model: CamouflagerModel, x_o: ImageBatch, x_h: ImageBatch) -> ImageBatch:
    """Inference-mode camouflaged batch.

    Batch-norm running statistics are frozen here so identical inputs always
    produce identical outputs.
    """
    t_o = _check_input(model, x_o, "x_o")
    t_h = _check_input(model, x_h, "x_h")
    if x_o.n != x_h.n:
        raise ValueError(f"batch sizes differ: {x_o.n} vs {x_h.n}")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(t_o, t_h)
    finally:
        model.train(was_training)
    return ImageBatch(out, "symmetric")


def camouflage_in_chunks(
    model: CamouflagerModel, x_o: ImageBatch, x_h: ImageBatch, chunk: int = 256
) -> ImageBatch:
    """camouflage() over large batches without materializing one giant graph."""
    parts = []
    for start in range(0, x_o.n, chunk):
        sl = slice(start, start + chunk)
        parts.append(
            camouflage(
                model,
                ImageBatch(x_o.data[sl], x_o.value_range),
                ImageBatch(x_h.data[sl], x_h.value_range),
            ).data
        )
    if not parts:
        return ImageBatch(x_o.data.new_empty((0, 3, model.input_size, model.input_size)),
                          "symmetric")
    return ImageBatch(torch.cat(parts), "symmetric")


def _conv_params(cin: int, cout: int, k: int) -> int:
    return cin * cout * k * k + cout


def _bn_params(c: int) -> int:
    return 2 * c


def expected_parameter_count(
    encoder_spec: EncoderSpec = EncoderSpec(),
    decoder_spec: DecoderSpec = DecoderSpec(),
) -> int:
    """Closed-form trainable parameter count for the full model."""
    enc = 0
    prev = encoder_spec.in_channels
    for ch in encoder_spec.channels:
        enc += _conv_params(prev, ch, encoder_spec.kernel) + _bn_params(ch)
        prev = ch
    dec = 0
    prev = decoder_spec.in_channels
    for i, ch in enumerate(decoder_spec.channels):
        dec += _conv_params(prev, ch, decoder_spec.kernel)
        if i < len(decoder_spec.channels) - 1:
            dec += _bn_params(ch)
        prev = ch
    return 2 * enc + dec


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def save_camouflager(
    model: CamouflagerModel, path, seed: int, loss_id: str = ""
) -> None:
    """Write a self-describing checkpoint: architecture, weights, provenance."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "input_size": model.input_size,
        "encoder_channels": list(model.encoder_spec.channels),
        "decoder_channels": list(model.decoder_spec.channels),
        "kernel": model.encoder_spec.kernel,
        "seed": seed,
        "loss_id": loss_id,
        "state_dict": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_camouflager(path) -> tuple[CamouflagerModel, dict]:
    """Load a checkpoint, validating architecture compatibility first."""
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a camouflager checkpoint")
    spec_e, spec_d = EncoderSpec(), DecoderSpec()
    if tuple(payload["encoder_channels"]) != spec_e.channels:
        raise ValueError(
            f"checkpoint encoder channels {payload['encoder_channels']} do not "
            f"match this architecture {list(spec_e.channels)}"
        )
    if tuple(payload["decoder_channels"]) != spec_d.channels:
        raise ValueError("checkpoint decoder channels do not match this architecture")
    if payload.get("kernel") != spec_e.kernel:
        raise ValueError("checkpoint kernel size does not match this architecture")
    model = CamouflagerModel(int(payload["input_size"]))
    model.load_state_dict(payload["state_dict"])
    meta = {k: payload[k] for k in ("input_size", "seed", "loss_id")}
    return model, meta
