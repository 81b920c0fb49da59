"""Denoising training objective.

Per item: draw a timestep and a noise sample, noise the latent with the
closed form, pick one report variant, and score the prediction with a
per-element mean squared error. Randomness is drawn separately from loss
evaluation so finite-difference checks can re-evaluate the identical
loss surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .latent import PreparedPatch
from .schedule import NoiseSchedule
from .unet import ConditionalUNet3d


@dataclass(frozen=True)
class TrainingItem:
    """A prepared patch plus its text variants (embedded, row-stacked)."""

    patch: PreparedPatch
    text_vectors: torch.Tensor  # (N, text_dim), each row L2-normalized
    term_key: tuple[str, ...]
    reference_text: str


@dataclass(frozen=True)
class LdmDraw:
    t: np.ndarray            # (B,) 1-indexed timesteps
    eps: torch.Tensor        # (B, C, d, h, w)
    variant_idx: np.ndarray  # (B,)


def draw_randomness(
    items: list[TrainingItem], s: NoiseSchedule, rng: np.random.Generator
) -> LdmDraw:
    shape = (len(items),) + tuple(items[0].patch.z0.shape)
    t = rng.integers(1, s.T + 1, size=len(items))
    eps = torch.from_numpy(rng.standard_normal(shape))
    variant_idx = np.array(
        [rng.integers(0, item.text_vectors.shape[0]) for item in items]
    )
    return LdmDraw(t=t, eps=eps, variant_idx=variant_idx)


def _batch_text(items, draw: LdmDraw, text_mode: str, dtype) -> torch.Tensor:
    rows = []
    for item, vi in zip(items, draw.variant_idx):
        if text_mode == "average":
            mean = item.text_vectors.mean(dim=0)
            rows.append(mean / torch.linalg.norm(mean))
        else:
            rows.append(item.text_vectors[int(vi)])
    return torch.stack(rows).to(dtype)


def ldm_loss(
    model: ConditionalUNet3d,
    items: list[TrainingItem],
    s: NoiseSchedule,
    draw: LdmDraw | None = None,
    rng: np.random.Generator | None = None,
    text_mode: str = "sample",
) -> torch.Tensor:
    """Mean squared error between the drawn and predicted noise."""
    if not items:
        raise ValueError("empty batch")
    if draw is None:
        if rng is None:
            raise ValueError("need either a draw or an rng")
        draw = draw_randomness(items, s, rng)
    dtype = next(model.parameters()).dtype
    z0 = torch.stack([it.patch.z0 for it in items]).to(dtype)
    zh = torch.stack([it.patch.z_healthy for it in items]).to(dtype)
    mask = torch.stack([it.patch.mask_latent for it in items]).to(dtype)
    text = _batch_text(items, draw, text_mode, dtype)
    eps = draw.eps.to(dtype)

    abar = torch.as_tensor(
        [s.abar(int(t)) for t in draw.t], dtype=dtype
    ).reshape(-1, 1, 1, 1, 1)
    z_t = abar.sqrt() * z0 + (1.0 - abar).sqrt() * eps
    t_tensor = torch.as_tensor(draw.t, dtype=torch.long)
    eps_hat = model(z_t, t_tensor, zh, mask, text)
    return torch.mean((eps - eps_hat) ** 2)
