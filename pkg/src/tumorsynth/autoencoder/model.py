"""3D vector-quantized autoencoder for volume patches.

Two residual blocks per resolution level; downsampling by strided conv,
upsampling by nearest-neighbor + conv. The decoder output is clamped to
[0, 1]. Quantization uses a straight-through estimator with codebook and
commitment penalties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..volumes.grid import ContractError, TumorMask, Volume


@dataclass(frozen=True)
class AEConfig:
    f: int = 4
    latent_channels: int = 4
    codebook_size: int = 256
    widths: tuple[int, ...] = (16, 32)
    commitment_beta: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.f < 1 or (self.f & (self.f - 1)) != 0:
            raise ValueError(f"downsample factor must be a power of two, got {self.f}")
        levels = int(np.log2(self.f)) if self.f > 1 else 0
        if len(self.widths) != max(levels, 1):
            raise ValueError(
                f"widths must list one channel count per level "
                f"({max(levels, 1)} for f={self.f}), got {self.widths}"
            )
        if self.latent_channels < 1 or self.codebook_size < 2:
            raise ValueError("latent_channels >= 1 and codebook_size >= 2 required")


@dataclass(frozen=True)
class LatentTensor:
    """Continuous or quantized latent for a single patch: (C, d, h, w)."""

    data: torch.Tensor
    downsample_factor: int
    source_shape: tuple[int, int, int]

    def __post_init__(self):
        if self.data.dim() != 4:
            raise ContractError(f"latent must be 4D, got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ContractError("latent has non-finite values")
        f = self.downsample_factor
        expected = tuple(-(-d // f) for d in self.source_shape)
        if tuple(self.data.shape[1:]) != expected:
            raise ContractError(
                f"latent spatial dims {tuple(self.data.shape[1:])} != "
                f"ceil(source/f) = {expected}"
            )

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, ch), ch)


class ResBlock3d(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.norm1 = _norm(ch)
        self.conv1 = nn.Conv3d(ch, ch, 3, padding=1)
        self.norm2 = _norm(ch)
        self.conv2 = nn.Conv3d(ch, ch, 3, padding=1)

    def forward(self, x):
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class Encoder3d(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        widths = cfg.widths
        layers: list[nn.Module] = [nn.Conv3d(1, widths[0], 3, padding=1)]
        for i, w in enumerate(widths):
            layers += [ResBlock3d(w), ResBlock3d(w)]
            if cfg.f > 1:
                nxt = widths[min(i + 1, len(widths) - 1)]
                layers.append(nn.Conv3d(w, nxt, 4, stride=2, padding=1))
        layers += [_norm(widths[-1]), nn.SiLU(), nn.Conv3d(widths[-1], cfg.latent_channels, 1)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Decoder3d(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        widths = cfg.widths
        layers: list[nn.Module] = [nn.Conv3d(cfg.latent_channels, widths[-1], 3, padding=1)]
        for i in range(len(widths) - 1, -1, -1):
            w = widths[i]
            layers += [ResBlock3d(w), ResBlock3d(w)]
            if cfg.f > 1:
                nxt = widths[max(i - 1, 0)]
                layers += [nn.Upsample(scale_factor=2, mode="nearest"),
                           nn.Conv3d(w, nxt, 3, padding=1)]
        layers += [_norm(widths[0]), nn.SiLU(), nn.Conv3d(widths[0], 1, 3, padding=1)]
        self.net = nn.Sequential(*layers)
        # raw pre-clamp output should start mid-range, not at the clamp edge
        nn.init.constant_(self.net[-1].bias, 0.5)

    def forward(self, z):
        return torch.clamp(self.net(z), 0.0, 1.0)


def quantize_sites(z: torch.Tensor, entries: torch.Tensor):
    """Map each spatial site of z (B, C, ...) to its nearest codebook entry.

    Returns (z_q with straight-through gradient, indices, codebook loss,
    commitment loss). Losses are per-site squared L2, averaged over sites.
    """
    if z.shape[1] != entries.shape[1]:
        raise ContractError(
            f"latent channels {z.shape[1]} != codebook dim {entries.shape[1]}"
        )
    spatial = z.shape[2:]
    flat = z.movedim(1, -1).reshape(-1, z.shape[1])
    d2 = (
        (flat * flat).sum(1, keepdim=True)
        - 2.0 * flat @ entries.t()
        + (entries * entries).sum(1)[None, :]
    )
    idx = d2.argmin(dim=1)
    picked = entries[idx]
    codebook_loss = ((picked - flat.detach()) ** 2).sum(1).mean()
    commitment_loss = ((flat - picked.detach()) ** 2).sum(1).mean()
    e = picked.reshape(z.shape[0], *spatial, z.shape[1]).movedim(-1, 1)
    z_q = z + (e - z).detach()
    return z_q, idx.reshape(z.shape[0], *spatial), codebook_loss, commitment_loss


class VQAutoencoder(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder3d(cfg)
        self.decoder = Decoder3d(cfg)
        self.codebook = nn.Parameter(
            torch.randn(cfg.codebook_size, cfg.latent_channels) * 0.5
        )

    def forward(self, x):
        z = self.encoder(x)
        z_q, idx, cb_loss, commit_loss = quantize_sites(z, self.codebook)
        recon = self.decoder(z_q)
        return recon, z, z_q, idx, cb_loss, commit_loss


def build_autoencoder(cfg: AEConfig) -> VQAutoencoder:
    """Construct with deterministic initialization from cfg.seed."""
    torch.manual_seed(cfg.seed)
    model = VQAutoencoder(cfg)
    with torch.no_grad():
        entries = model.codebook
        # distinct entries at init
        if torch.unique(entries, dim=0).shape[0] != entries.shape[0]:
            entries += torch.randn_like(entries) * 1e-3
    return model


@dataclass(frozen=True)
class Codebook:
    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", arr)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ContractError("codebook needs K >= 2 entries of fixed dim")
        if not np.all(np.isfinite(arr)):
            raise ContractError("codebook entries must be finite")

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _as_tensor(x, like: torch.Tensor | None = None) -> torch.Tensor:
    dtype = like.dtype if like is not None else torch.float32
    if isinstance(x, Volume):
        x = x.data
    if isinstance(x, np.ndarray):
        return torch.as_tensor(np.ascontiguousarray(x), dtype=dtype)
    return x.to(dtype)


def encode(model: VQAutoencoder, x, mask: TumorMask | None = None) -> LatentTensor:
    """Encode a normalized patch (optionally with the masked region zeroed).

    Passing `mask` yields the healthy-context latent: the encoder sees
    (1 - m) * x.
    """
    param = next(model.parameters())
    t = _as_tensor(x, param)
    if isinstance(x, Volume) and not x.normalized:
        raise ContractError("encode expects a normalized volume")
    if t.dim() != 3:
        raise ContractError(f"expected a (D, H, W) patch, got {tuple(t.shape)}")
    f = model.cfg.f
    if any(d % f != 0 for d in t.shape):
        raise ContractError(f"spatial dims {tuple(t.shape)} not divisible by f={f}")
    if mask is not None:
        m = torch.as_tensor(mask.data, dtype=t.dtype)
        t = (1.0 - m) * t
    with torch.no_grad():
        z = model.encoder(t[None, None])
    return LatentTensor(z[0], downsample_factor=f, source_shape=tuple(t.shape))


def quantize(z: LatentTensor, cb: Codebook):
    """Snap a latent to the codebook; returns (z_q, indices, losses)."""
    entries = torch.as_tensor(cb.entries, dtype=z.data.dtype)
    z_q, idx, cb_loss, commit_loss = quantize_sites(z.data[None], entries)
    out = LatentTensor(
        z_q[0], downsample_factor=z.downsample_factor, source_shape=z.source_shape
    )
    losses = {"codebook": float(cb_loss), "commitment": float(commit_loss)}
    return out, idx[0].numpy(), losses


def decode(model: VQAutoencoder, z_q: LatentTensor) -> np.ndarray:
    """Decode a latent back to a (D, H, W) patch in [0, 1]."""
    if z_q.channels != model.cfg.latent_channels:
        raise ContractError(
            f"latent channels {z_q.channels} != model {model.cfg.latent_channels}"
        )
    param = next(model.parameters())
    with torch.no_grad():
        out = model.decoder(z_q.data[None].to(param.dtype))
    return out[0, 0].numpy()
