"""Latent-space preparation: standardization and dataset pre-encoding.

Diffusion runs on continuous encoder outputs standardized by
dataset-level per-channel statistics computed once after autoencoder
training, so the unit-variance noise assumption holds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..autoencoder.model import VQAutoencoder, encode
from ..volumes.grid import TumorMask, Volume
from .unet import downsample_mask


@dataclass(frozen=True)
class LatentStats:
    mean: np.ndarray  # (C,)
    std: np.ndarray   # (C,)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if np.any(std <= 0):
            raise ValueError("latent std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def compute_latent_stats(ae: VQAutoencoder, volumes) -> LatentStats:
    """Per-channel mean/SD of encoder outputs over a dataset."""
    acc = []
    for v in volumes:
        z = encode(ae, v).data
        acc.append(z.reshape(z.shape[0], -1))
    stacked = torch.cat(acc, dim=1).double().numpy()
    std = stacked.std(axis=1)
    std[std < 1e-8] = 1.0
    return LatentStats(mean=stacked.mean(axis=1), std=std)


def standardize(z: torch.Tensor, stats: LatentStats) -> torch.Tensor:
    mean = torch.as_tensor(stats.mean, dtype=z.dtype)
    std = torch.as_tensor(stats.std, dtype=z.dtype)
    if z.dim() == 5:
        return (z - mean.reshape(1, -1, 1, 1, 1)) / std.reshape(1, -1, 1, 1, 1)
    return (z - mean.reshape(-1, 1, 1, 1)) / std.reshape(-1, 1, 1, 1)


def unstandardize(z: torch.Tensor, stats: LatentStats) -> torch.Tensor:
    mean = torch.as_tensor(stats.mean, dtype=z.dtype)
    std = torch.as_tensor(stats.std, dtype=z.dtype)
    if z.dim() == 5:
        return z * std.reshape(1, -1, 1, 1, 1) + mean.reshape(1, -1, 1, 1, 1)
    return z * std.reshape(-1, 1, 1, 1) + mean.reshape(-1, 1, 1, 1)


@dataclass(frozen=True)
class PreparedPatch:
    """Pre-encoded training item: everything the denoiser consumes."""

    z0: torch.Tensor          # (C, d, h, w) standardized
    z_healthy: torch.Tensor   # (C, d, h, w) standardized
    mask_latent: torch.Tensor  # (1, d, h, w) in {0, 1}


def prepare_patch(
    ae: VQAutoencoder, v: Volume, m: TumorMask, stats: LatentStats
) -> PreparedPatch:
    z0 = standardize(encode(ae, v).data, stats)
    zh = standardize(encode(ae, v, mask=m).data, stats)
    ml = torch.from_numpy(downsample_mask(m.data, ae.cfg.f))[None]
    return PreparedPatch(z0=z0, z_healthy=zh, mask_latent=ml)
