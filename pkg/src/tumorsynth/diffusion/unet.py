"""Conditional denoiser: time-conditioned 3D U-Net over latent patches.

Conditioning pathways:
  * healthy-context latent and downsampled mask are channel-concatenated
    with the noisy latent at the input;
  * the timestep enters every residual block via a sinusoidal embedding;
  * report text enters through cross-attention at the bottleneck and the
    coarsest levels;
  * spatial self-attention at the bottleneck carries an additive
    key-side bias on in-mask sites, steering attention toward the
    synthesis region.

Text reaches the network only through the cross-attention blocks, so
zeroing their output projections makes the output exactly
text-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from ..volumes.grid import ContractError


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 4
    widths: tuple[int, ...] = (32, 64)
    time_dim: int = 64
    text_dim: int = 128
    text_tokens: int = 4
    attn_heads: int = 2
    seed: int = 0

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("denoiser needs at least two resolution levels")
        if self.text_tokens < 1 or self.attn_heads < 1:
            raise ValueError("text_tokens and attn_heads must be >= 1")


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0)
            * torch.arange(half, dtype=t.dtype, device=t.device)
            / max(half - 1, 1)
        )
        args = t[:, None].to(freqs.dtype) * freqs[None]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, ch), ch)


class TimeResBlock(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, time_dim: int):
        super().__init__()
        self.norm1 = _norm(ch_in)
        self.conv1 = nn.Conv3d(ch_in, ch_out, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, ch_out)
        self.norm2 = _norm(ch_out)
        self.conv2 = nn.Conv3d(ch_out, ch_out, 3, padding=1)
        self.skip = nn.Conv3d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class TextCrossAttention(nn.Module):
    """Attend from spatial sites to learned text tokens.

    The output projection starts at zero, so an untrained block leaves
    its input untouched and carries no text signal.
    """

    def __init__(self, ch: int, text_dim: int, n_tokens: int, heads: int):
        super().__init__()
        self.heads = heads
        self.n_tokens = n_tokens
        self.norm = _norm(ch)
        self.token_proj = nn.Linear(text_dim, n_tokens * ch)
        self.q = nn.Linear(ch, ch)
        self.k = nn.Linear(ch, ch)
        self.v = nn.Linear(ch, ch)
        self.out = nn.Linear(ch, ch)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x, text):
        b, c = x.shape[:2]
        spatial = x.shape[2:]
        tokens = self.token_proj(text).reshape(b, self.n_tokens, c)
        h = self.norm(x).reshape(b, c, -1).movedim(1, 2)  # (b, sites, c)
        q = self.q(h).reshape(b, -1, self.heads, c // self.heads).movedim(1, 2)
        k = self.k(tokens).reshape(b, -1, self.heads, c // self.heads).movedim(1, 2)
        v = self.v(tokens).reshape(b, -1, self.heads, c // self.heads).movedim(1, 2)
        logits = q @ k.transpose(-1, -2) / math.sqrt(c // self.heads)
        attn = logits.softmax(dim=-1)
        mixed = (attn @ v).movedim(1, 2).reshape(b, -1, c)
        out = self.out(mixed).movedim(1, 2).reshape(b, c, *spatial)
        return x + out


class MaskedSpatialAttention(nn.Module):
    """Self-attention over sites with a key-side bias on the mask region."""

    def __init__(self, ch: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = _norm(ch)
        self.qkv = nn.Linear(ch, 3 * ch)
        self.out = nn.Linear(ch, ch)
        self.mask_gain = nn.Parameter(torch.tensor(1.0))
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x, mask):
        b, c = x.shape[:2]
        spatial = x.shape[2:]
        h = self.norm(x).reshape(b, c, -1).movedim(1, 2)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        hd = c // self.heads
        q = q.reshape(b, -1, self.heads, hd).movedim(1, 2)
        k = k.reshape(b, -1, self.heads, hd).movedim(1, 2)
        v = v.reshape(b, -1, self.heads, hd).movedim(1, 2)
        logits = q @ k.transpose(-1, -2) / math.sqrt(hd)
        bias = self.mask_gain * mask.reshape(b, 1, 1, -1).to(logits.dtype)
        attn = (logits + bias).softmax(dim=-1)
        mixed = (attn @ v).movedim(1, 2).reshape(b, -1, c)
        out = self.out(mixed).movedim(1, 2).reshape(b, c, *spatial)
        return x + out


class ConditionalUNet3d(nn.Module):
    """Noise predictor over (z_t, z_healthy, mask) with text conditioning."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        c_in = 2 * cfg.latent_channels + 1
        w = cfg.widths
        td = cfg.time_dim

        self.time_embed = nn.Sequential(
            SinusoidalTimeEmbedding(td),
            nn.Linear(td, td),
            nn.SiLU(),
            nn.Linear(td, td),
        )
        self.stem = nn.Conv3d(c_in, w[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        for i in range(len(w)):
            self.down_blocks.append(
                nn.ModuleList([TimeResBlock(w[i], w[i], td), TimeResBlock(w[i], w[i], td)])
            )
            self.down_attn.append(
                TextCrossAttention(w[i], cfg.text_dim, cfg.text_tokens, cfg.attn_heads)
            )
            if i + 1 < len(w):
                self.downsamplers.append(nn.Conv3d(w[i], w[i + 1], 4, stride=2, padding=1))

        wb = w[-1]
        self.mid_block1 = TimeResBlock(wb, wb, td)
        self.mid_spatial = MaskedSpatialAttention(wb, cfg.attn_heads)
        self.mid_cross = TextCrossAttention(wb, cfg.text_dim, cfg.text_tokens, cfg.attn_heads)
        self.mid_block2 = TimeResBlock(wb, wb, td)

        self.upsamplers = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for i in range(len(w) - 1, -1, -1):
            self.up_blocks.append(
                nn.ModuleList(
                    [TimeResBlock(2 * w[i], w[i], td), TimeResBlock(w[i], w[i], td)]
                )
            )
            if i > 0:
                self.upsamplers.append(
                    nn.Sequential(
                        nn.Upsample(scale_factor=2, mode="nearest"),
                        nn.Conv3d(w[i], w[i - 1], 3, padding=1),
                    )
                )
        self.out_norm = _norm(w[0])
        self.out_conv = nn.Conv3d(w[0], cfg.latent_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def _level_mask(self, mask: torch.Tensor, spatial) -> torch.Tensor:
        if tuple(mask.shape[2:]) == tuple(spatial):
            return mask
        return F.interpolate(mask, size=tuple(spatial), mode="nearest")

    def forward(self, z_t, t, z_healthy, mask, text, return_features: bool = False):
        """All tensors batched; t is a (B,) tensor of 1-indexed steps."""
        if z_t.shape != z_healthy.shape:
            raise ContractError(
                f"z_t shape {tuple(z_t.shape)} != z_healthy {tuple(z_healthy.shape)}"
            )
        if mask.shape[0] != z_t.shape[0] or tuple(mask.shape[2:]) != tuple(z_t.shape[2:]):
            raise ContractError(
                f"mask shape {tuple(mask.shape)} incompatible with {tuple(z_t.shape)}"
            )
        temb = self.time_embed(t.to(z_t.dtype))
        x = self.stem(torch.cat([z_t, z_healthy, mask.to(z_t.dtype)], dim=1))

        skips = []
        for i, (blocks, attn) in enumerate(zip(self.down_blocks, self.down_attn)):
            for block in blocks:
                x = block(x, temb)
            x = attn(x, text)
            skips.append(x)
            if i < len(self.downsamplers):
                x = self.downsamplers[i](x)

        mask_mid = self._level_mask(mask, x.shape[2:])
        x = self.mid_block1(x, temb)
        x = self.mid_spatial(x, mask_mid)
        x = self.mid_cross(x, text)
        x = self.mid_block2(x, temb)
        bottleneck = x

        for i, blocks in enumerate(self.up_blocks):
            x = torch.cat([x, skips[-(i + 1)]], dim=1)
            for block in blocks:
                x = block(x, temb)
            if i < len(self.upsamplers):
                x = self.upsamplers[i](x)

        eps_hat = self.out_conv(F.silu(self.out_norm(x)))
        if return_features:
            return eps_hat, bottleneck
        return eps_hat


def build_denoiser(cfg: DenoiserConfig) -> ConditionalUNet3d:
    torch.manual_seed(cfg.seed)
    return ConditionalUNet3d(cfg)


def zero_text_conditioning(model: ConditionalUNet3d) -> None:
    """Zero every cross-attention output projection (text has no effect)."""
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, TextCrossAttention):
                module.out.weight.zero_()
                module.out.bias.zero_()


def randomize_text_conditioning(model: ConditionalUNet3d, scale: float = 0.1) -> None:
    """Give cross-attention nonzero output weights (probe/test helper)."""
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, TextCrossAttention):
                module.out.weight.normal_(0.0, scale)
                module.out.bias.zero_()


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor downsample of a binary (D, H, W) mask."""
    if factor == 1:
        return mask.astype(np.float32)
    off = factor // 2
    return mask[off::factor, off::factor, off::factor].astype(np.float32)
