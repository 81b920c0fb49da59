"""Push/pull objective over tumor-region features.

Features are masked average pools of the denoiser bottleneck, taken in
the same forward pass as noise prediction, so the combined objective is
differentiable end to end. The raw same-minus-different objective is
unbounded below; the different-term is capped by a margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..diffusion.loss import TrainingItem
from ..diffusion.schedule import NoiseSchedule
from ..diffusion.unet import ConditionalUNet3d
from ..volumes.grid import ContractError

DEFAULT_MARGIN = 1.0
DEFAULT_LAMBDA = 0.1


def extract_tumor_feature(
    bottleneck: torch.Tensor, mask_latent: torch.Tensor
) -> torch.Tensor:
    """Masked average-pool of bottleneck activations, L2-normalized.

    `bottleneck` is (B, C, d', h', w'); `mask_latent` is (B, 1, d, h, w)
    at latent resolution and is nearest-downsampled to match. Raises if
    any item's mask is empty at pooling resolution.
    """
    if bottleneck.dim() != 5 or mask_latent.dim() != 5:
        raise ContractError("expected batched 5D tensors")
    mask = mask_latent
    if tuple(mask.shape[2:]) != tuple(bottleneck.shape[2:]):
        mask = F.interpolate(mask, size=tuple(bottleneck.shape[2:]), mode="nearest")
    mask = mask.to(bottleneck.dtype)
    weights = mask.sum(dim=(2, 3, 4))
    if (weights == 0).any():
        raise ContractError(
            "mask empty at pooling resolution; magnify the mask first"
        )
    pooled = (bottleneck * mask).sum(dim=(2, 3, 4)) / weights
    return pooled / torch.linalg.norm(pooled, dim=1, keepdim=True)


def _check_normalized(f: torch.Tensor, name: str) -> None:
    norm = float(torch.linalg.norm(f))
    if abs(norm - 1.0) > 1e-5:
        raise ContractError(f"{name} is not L2-normalized (norm={norm})")


def contrastive_losses(
    fa: torch.Tensor, fp: torch.Tensor, fn: torch.Tensor, margin: float = DEFAULT_MARGIN
) -> dict:
    """L_same, the margin-capped L_different, and their difference."""
    if margin <= 0:
        raise ContractError(f"margin must be > 0, got {margin}")
    for f, name in ((fa, "anchor"), (fp, "positive"), (fn, "negative")):
        _check_normalized(f, name)
    l_same = torch.sum((fa - fp) ** 2)
    l_diff = torch.clamp_max(torch.sum((fa - fn) ** 2), margin)
    return {
        "L_same": l_same,
        "L_different": l_diff,
        "L_contrastive": l_same - l_diff,
    }


@dataclass(frozen=True)
class TripletDraw:
    """Index triple into a dataset plus the shared randomness.

    The negative branch reuses the anchor's volume, mask, timestep, and
    noise; only its text differs, so the feature gap isolates the text
    pathway.
    """

    anchor: int
    positive: int
    negative_text_from: int
    t: int
    anchor_variant: int
    positive_variant: int
    negative_variant: int


def build_triplets(
    items: list[TrainingItem], count: int, rng: np.random.Generator
) -> list[TripletDraw]:
    """Sample triplets honoring the term-set constraints.

    anchor/positive share a term key but are different items; the
    negative text comes from an item with a different term key.
    """
    by_key: dict[tuple, list[int]] = {}
    for i, item in enumerate(items):
        by_key.setdefault(item.term_key, []).append(i)
    multi = [k for k, v in by_key.items() if len(v) >= 2]
    if not multi or len(by_key) < 2:
        raise ValueError(
            "triplets need >= 2 items sharing a term key and >= 2 distinct keys"
        )
    draws = []
    for _ in range(count):
        key = multi[rng.integers(len(multi))]
        a, p = rng.choice(by_key[key], size=2, replace=False)
        other_keys = [k for k in by_key if k != key]
        nk = other_keys[rng.integers(len(other_keys))]
        n_src = by_key[nk][rng.integers(len(by_key[nk]))]
        draws.append(
            TripletDraw(
                anchor=int(a),
                positive=int(p),
                negative_text_from=int(n_src),
                t=0,  # assigned at loss time against the schedule
                anchor_variant=int(rng.integers(items[a].text_vectors.shape[0])),
                positive_variant=int(rng.integers(items[p].text_vectors.shape[0])),
                negative_variant=int(rng.integers(items[n_src].text_vectors.shape[0])),
            )
        )
    return draws


def validate_triplet(items: list[TrainingItem], draw: TripletDraw) -> None:
    a = items[draw.anchor]
    p = items[draw.positive]
    n = items[draw.negative_text_from]
    if a.term_key != p.term_key:
        raise ContractError("positive must share the anchor's term set")
    if a.term_key == n.term_key:
        raise ContractError("negative must use a different term set")
    if draw.anchor == draw.positive:
        raise ContractError("positive must come from a different item")


@dataclass(frozen=True)
class TripletRandomness:
    t: np.ndarray            # (n,) shared per triplet
    eps_anchor: torch.Tensor  # (n, C, d, h, w) shared with the negative branch
    eps_positive: torch.Tensor


def draw_triplet_randomness(
    draws: list[TripletDraw],
    items: list[TrainingItem],
    s: NoiseSchedule,
    rng: np.random.Generator,
) -> TripletRandomness:
    shape = (len(draws),) + tuple(items[0].patch.z0.shape)
    return TripletRandomness(
        t=rng.integers(1, s.T + 1, size=len(draws)),
        eps_anchor=torch.from_numpy(rng.standard_normal(shape)),
        eps_positive=torch.from_numpy(rng.standard_normal(shape)),
    )


def _branch_forward(model, z0, zh, mask, text, t, eps, s, dtype):
    abar = torch.as_tensor(
        [s.abar(int(x)) for x in t], dtype=dtype
    ).reshape(-1, 1, 1, 1, 1)
    z_t = abar.sqrt() * z0 + (1.0 - abar).sqrt() * eps
    t_tensor = torch.as_tensor(t, dtype=torch.long)
    eps_hat, bottleneck = model(z_t, t_tensor, zh, mask, text, return_features=True)
    return eps_hat, bottleneck


def total_loss(
    model: ConditionalUNet3d,
    items: list[TrainingItem],
    draws: list[TripletDraw],
    s: NoiseSchedule,
    lambda_contrastive: float = DEFAULT_LAMBDA,
    margin: float = DEFAULT_MARGIN,
    randomness: TripletRandomness | None = None,
    rng: np.random.Generator | None = None,
):
    """Denoising MSE over all triplet branches plus the contrastive term.

    Returns (total, parts) where parts holds detached component values.
    """
    if not draws:
        raise ValueError("no triplets")
    for d in draws:
        validate_triplet(items, d)
    if randomness is None:
        if rng is None:
            raise ValueError("need either randomness or an rng")
        randomness = draw_triplet_randomness(draws, items, s, rng)
    dtype = next(model.parameters()).dtype

    def stack(attr, idxs):
        return torch.stack([getattr(items[i].patch, attr) for i in idxs]).to(dtype)

    a_idx = [d.anchor for d in draws]
    p_idx = [d.positive for d in draws]

    text_a = torch.stack(
        [items[d.anchor].text_vectors[d.anchor_variant] for d in draws]
    ).to(dtype)
    text_p = torch.stack(
        [items[d.positive].text_vectors[d.positive_variant] for d in draws]
    ).to(dtype)
    text_n = torch.stack(
        [items[d.negative_text_from].text_vectors[d.negative_variant] for d in draws]
    ).to(dtype)

    eps_a = randomness.eps_anchor.to(dtype)
    eps_p = randomness.eps_positive.to(dtype)
    t = randomness.t

    ea_hat, feat_a = _branch_forward(
        model, stack("z0", a_idx), stack("z_healthy", a_idx),
        stack("mask_latent", a_idx), text_a, t, eps_a, s, dtype,
    )
    ep_hat, feat_p = _branch_forward(
        model, stack("z0", p_idx), stack("z_healthy", p_idx),
        stack("mask_latent", p_idx), text_p, t, eps_p, s, dtype,
    )
    # negative: anchor volume and noise, different text
    en_hat, feat_n = _branch_forward(
        model, stack("z0", a_idx), stack("z_healthy", a_idx),
        stack("mask_latent", a_idx), text_n, t, eps_a, s, dtype,
    )

    l_ldm = (
        torch.mean((eps_a - ea_hat) ** 2)
        + torch.mean((eps_p - ep_hat) ** 2)
        + torch.mean((eps_a - en_hat) ** 2)
    ) / 3.0

    fa = extract_tumor_feature(feat_a, stack("mask_latent", a_idx))
    fp = extract_tumor_feature(feat_p, stack("mask_latent", p_idx))
    fn = extract_tumor_feature(feat_n, stack("mask_latent", a_idx))

    l_same = torch.sum((fa - fp) ** 2, dim=1)
    l_diff = torch.clamp_max(torch.sum((fa - fn) ** 2, dim=1), margin)
    l_contrastive = (l_same - l_diff).mean()

    total = l_ldm + lambda_contrastive * l_contrastive
    parts = {
        "L_ldm": float(l_ldm.detach()),
        "L_same": float(l_same.mean().detach()),
        "L_different": float(l_diff.mean().detach()),
        "L_contrastive": float(l_contrastive.detach()),
    }
    return total, parts
