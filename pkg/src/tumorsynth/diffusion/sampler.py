"""Reverse diffusion: single steps, the full sampling loop, and
mask-composited tumor synthesis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
import torch

from ..autoencoder.model import Codebook, LatentTensor, VQAutoencoder, decode, encode, quantize
from ..text.embedding import TextEmbedding, embed_text
from ..volumes.grid import ContractError, TumorMask, Volume
from .latent import LatentStats, standardize, unstandardize
from .schedule import NoiseSchedule
from .unet import ConditionalUNet3d, downsample_mask


@dataclass(frozen=True)
class ConditionBundle:
    """Everything the denoiser sees besides the noisy latent itself."""

    z_healthy: torch.Tensor   # (C, d, h, w), standardized
    text: TextEmbedding
    mask_latent: torch.Tensor  # (1, d, h, w)
    t: int

    def validate_against(self, z_t: torch.Tensor, s: NoiseSchedule) -> None:
        if tuple(self.z_healthy.shape) != tuple(z_t.shape):
            raise ContractError(
                f"z_healthy {tuple(self.z_healthy.shape)} != z_t {tuple(z_t.shape)}"
            )
        if tuple(self.mask_latent.shape[1:]) != tuple(z_t.shape[1:]):
            raise ContractError(
                f"mask_latent {tuple(self.mask_latent.shape)} does not align "
                f"with z_t {tuple(z_t.shape)}"
            )
        if not 1 <= self.t <= s.T:
            raise ContractError(f"t={self.t} outside [1, {s.T}]")


class NoisePredictor(Protocol):
    def __call__(self, z_t: torch.Tensor, cond: ConditionBundle) -> torch.Tensor: ...


class UNetPredictor:
    """Adapts the batched U-Net to single-sample (C, d, h, w) calls."""

    def __init__(self, model: ConditionalUNet3d):
        if model is None:
            raise ContractError("no denoiser weights provided")
        self.model = model

    def __call__(self, z_t: torch.Tensor, cond: ConditionBundle) -> torch.Tensor:
        dtype = next(self.model.parameters()).dtype
        text = torch.as_tensor(cond.text.vector, dtype=dtype)
        with torch.no_grad():
            eps = self.model(
                z_t[None].to(dtype),
                torch.tensor([cond.t], dtype=torch.long),
                cond.z_healthy[None].to(dtype),
                cond.mask_latent[None].to(dtype),
                text[None],
            )
        return eps[0].to(z_t.dtype)


class OracleDenoiser:
    """Returns the exact noise that maps z_t back to a known target latent."""

    def __init__(self, target: torch.Tensor, schedule: NoiseSchedule):
        self.target = target
        self.schedule = schedule

    def __call__(self, z_t: torch.Tensor, cond: ConditionBundle) -> torch.Tensor:
        abar = self.schedule.abar(cond.t)
        return (z_t - (abar ** 0.5) * self.target) / ((1.0 - abar) ** 0.5)


def predict_noise(
    predictor: NoisePredictor, z_t: torch.Tensor, cond: ConditionBundle,
    s: NoiseSchedule,
) -> torch.Tensor:
    cond.validate_against(z_t, s)
    eps_hat = predictor(z_t, cond)
    if tuple(eps_hat.shape) != tuple(z_t.shape):
        raise ContractError(
            f"predictor returned {tuple(eps_hat.shape)}, expected {tuple(z_t.shape)}"
        )
    return eps_hat


def denoise_step(
    z_t: torch.Tensor,
    cond: ConditionBundle,
    predictor: NoisePredictor,
    s: NoiseSchedule,
    generator: torch.Generator | None = None,
    deterministic: bool = False,
) -> torch.Tensor:
    """One ancestral DDPM step from t to t-1 (sigma_1 = 0 at the end)."""
    t = cond.t
    if t < 1:
        raise ContractError(f"cannot step from t={t}")
    eps_hat = predict_noise(predictor, z_t, cond, s)
    beta_t = float(s.beta[t - 1])
    alpha_t = float(s.alpha[t - 1])
    abar_t = s.abar(t)
    mean = (z_t - (beta_t / (1.0 - abar_t) ** 0.5) * eps_hat) / alpha_t ** 0.5
    if deterministic:
        return mean
    sigma = s.sigma(t)
    if sigma == 0.0:
        return mean
    noise = torch.randn(z_t.shape, generator=generator, dtype=z_t.dtype)
    return mean + sigma * noise


def sample_latent(
    predictor: NoisePredictor,
    z_healthy: torch.Tensor,
    mask_latent: torch.Tensor,
    text: TextEmbedding,
    s: NoiseSchedule,
    generator: torch.Generator | None = None,
    deterministic: bool = False,
    z_init: torch.Tensor | None = None,
) -> torch.Tensor:
    """Run the full T-step reverse loop from pure noise (or `z_init`)."""
    if z_init is None:
        z = torch.randn(z_healthy.shape, generator=generator, dtype=z_healthy.dtype)
    else:
        z = z_init
    for t in range(s.T, 0, -1):
        cond = ConditionBundle(
            z_healthy=z_healthy, text=text, mask_latent=mask_latent, t=t
        )
        z = denoise_step(z, cond, predictor, s, generator, deterministic)
    return z


def synthesize_tumor(
    ae: VQAutoencoder,
    denoiser: ConditionalUNet3d,
    stats: LatentStats,
    x_healthy: Volume,
    m: TumorMask,
    report_text: str,
    s: NoiseSchedule,
    seed: int = 0,
    deterministic: bool = False,
) -> Volume:
    """Generate a tumor inside the mask; voxels outside it are untouched.

    The reverse loop runs in standardized latent space conditioned on the
    healthy context, report text, and mask; the decoded patch is
    composited through the mask, so the output equals the input
    bit-exactly outside the synthesis region.
    """
    if ae is None or denoiser is None or stats is None:
        raise ContractError("synthesis requires trained autoencoder and denoiser")
    if x_healthy.shape != m.shape:
        raise ContractError(f"volume {x_healthy.shape} and mask {m.shape} differ")
    z_healthy = standardize(encode(ae, x_healthy, mask=m).data, stats)
    mask_latent = torch.from_numpy(downsample_mask(m.data, ae.cfg.f))[None]
    text = embed_text(report_text)
    generator = torch.Generator().manual_seed(seed)
    z0_hat = sample_latent(
        UNetPredictor(denoiser),
        z_healthy,
        mask_latent,
        text,
        s,
        generator=generator,
        deterministic=deterministic,
    )
    z_img = unstandardize(z0_hat, stats)
    latent = LatentTensor(
        z_img, downsample_factor=ae.cfg.f, source_shape=x_healthy.shape
    )
    codebook = Codebook(ae.codebook.detach().numpy())
    z_q, _, _ = quantize(latent, codebook)
    decoded = decode(ae, z_q).astype(np.float32)
    composited = np.where(m.data.astype(bool), decoded, x_healthy.data)
    return Volume(composited, spacing=x_healthy.spacing, normalized=True)
