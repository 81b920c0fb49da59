"""End-to-end training orchestration on phantom data.

Builds the phantom corpus, runs reference sentences through the text
pipeline (extraction, variant generation, embedding), pre-encodes
latents with a trained autoencoder, and trains the conditional denoiser
with or without the contrastive term and text augmentation. Also hosts
the evaluation probes used by the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .autoencoder.model import VQAutoencoder
from .autoencoder.train import TrainingDiverged
from .contrastive.losses import (
    DEFAULT_LAMBDA,
    DEFAULT_MARGIN,
    build_triplets,
    draw_triplet_randomness,
    extract_tumor_feature,
    total_loss,
)
from .diffusion.latent import LatentStats, prepare_patch
from .diffusion.loss import TrainingItem, draw_randomness, ldm_loss
from .diffusion.schedule import NoiseSchedule
from .diffusion.unet import ConditionalUNet3d, DenoiserConfig, build_denoiser
from .diffusion.sampler import synthesize_tumor
from .text.client import LMClient
from .text.embedding import embed_text
from .text.pipeline import RadiologyReport, extract_descriptors, generate_variants
from .text.vocabulary import Vocabulary
from .volumes.grid import TumorMask, Volume
from .volumes.phantom import PhantomSpec, ellipsoid_mask, make_background, make_phantom

# Profiles used for the reference corpus: attenuation direction is the
# controllable factor; margins/texture add variety.
REFERENCE_PROFILES: tuple[tuple[str, ...], ...] = (
    ("hypodense",),
    ("hyperenhancing",),
    ("hypodense", "ill-defined"),
    ("hyperenhancing", "well-defined"),
    ("hypodense", "heterogeneous"),
    ("hyperenhancing", "heterogeneous"),
)


@dataclass(frozen=True)
class PhantomRecord:
    volume: Volume
    mask: TumorMask
    profile: tuple[str, ...]
    organ: str
    reference_text: str
    seed: int


def build_phantom_corpus(
    n_items: int,
    seed: int = 0,
    organ: str = "liver",
    shape: tuple[int, int, int] = (32, 32, 32),
    profiles: tuple[tuple[str, ...], ...] = REFERENCE_PROFILES,
) -> list[PhantomRecord]:
    """Deterministic corpus cycling through the profile bank."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_items):
        profile = profiles[i % len(profiles)]
        radii = tuple(float(r) for r in rng.uniform(5.0, 9.0, size=3))
        lo = [int(np.ceil(r)) + 1 for r in radii]
        hi = [s - int(np.ceil(r)) - 2 for s, r in zip(shape, radii)]
        center = tuple(int(rng.integers(l, h + 1)) for l, h in zip(lo, hi))
        spec = PhantomSpec(organ, profile, center, radii, seed=int(rng.integers(2**31)),
                           shape=shape)
        volume, mask, text = make_phantom(spec)
        records.append(
            PhantomRecord(volume, mask, profile, organ, text, spec.seed)
        )
    return records


def prepare_training_items(
    records: list[PhantomRecord],
    ae: VQAutoencoder,
    stats: LatentStats,
    vocab: Vocabulary,
    client: LMClient,
    n_variants: int = 100,
    text_augmentation: bool = True,
    similarity_threshold: float = 0.6,
) -> list[TrainingItem]:
    """Run each record's reference sentence through the text pipeline.

    With text_augmentation off, only the single reference sentence is
    embedded (the no-augmentation ablation).
    """
    items = []
    for i, rec in enumerate(records):
        report = RadiologyReport(f"phantom-{i}", rec.organ, rec.reference_text)
        descriptors = extract_descriptors(report, client, vocab)
        if text_augmentation and descriptors.terms:
            variants = generate_variants(
                descriptors, n_variants, client, threshold=similarity_threshold
            )
            texts = variants.variants
        else:
            texts = (rec.reference_text,)
        vectors = torch.stack(
            [torch.from_numpy(embed_text(t).vector) for t in texts]
        )
        items.append(
            TrainingItem(
                patch=prepare_patch(ae, rec.volume, rec.mask, stats),
                text_vectors=vectors,
                term_key=tuple(sorted(descriptors.terms)),
                reference_text=rec.reference_text,
            )
        )
    return items


def train_diffusion(
    items: list[TrainingItem],
    cfg: DenoiserConfig,
    s: NoiseSchedule,
    steps: int,
    batch_size: int = 6,
    lr: float = 1e-3,
    contrastive: bool = True,
    lambda_contrastive: float = DEFAULT_LAMBDA,
    margin: float = DEFAULT_MARGIN,
    seed: int = 0,
    log_every: int = 50,
    model: ConditionalUNet3d | None = None,
):
    """Train the denoiser; returns (model, metrics).

    With contrastive on, every step runs batch_size//3 triplets (three
    branches each); otherwise a plain denoising batch.
    """
    if not items:
        raise ValueError("no training items")
    if model is None:
        model = build_denoiser(cfg)
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999))
    effective_lambda = lambda_contrastive if contrastive else 0.0
    metrics: list[dict] = []
    model.train()
    for step in range(steps):
        if contrastive:
            n_triplets = max(batch_size // 3, 1)
            draws = build_triplets(items, n_triplets, rng)
            randomness = draw_triplet_randomness(draws, items, s, rng)
            loss, parts = total_loss(
                model, items, draws, s,
                lambda_contrastive=effective_lambda,
                margin=margin,
                randomness=randomness,
            )
        else:
            idx = rng.integers(0, len(items), size=min(batch_size, len(items)))
            batch = [items[int(i)] for i in idx]
            loss = ldm_loss(model, batch, s, rng=rng)
            parts = {"L_ldm": float(loss.detach())}
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}: {parts}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            metrics.append({"step": step, "loss": float(loss.detach()), **parts})
    model.eval()
    return model, metrics


def controllability_probe(
    ae: VQAutoencoder,
    denoiser: ConditionalUNet3d,
    stats: LatentStats,
    s: NoiseSchedule,
    n_pairs: int = 20,
    organ: str = "liver",
    shape: tuple[int, int, int] = (32, 32, 32),
    seed: int = 1234,
    text_low: str = "a hypodense lesion in the liver",
    text_high: str = "a hyperenhancing lesion in the liver",
) -> dict:
    """Paired-seed comparison of in-mask mean intensity across two texts.

    For each pair: one healthy patch, one mask, one sampling seed; two
    syntheses differing only in the conditioning text. Counts how often
    the low-attenuation text yields the darker tumor.
    """
    rng = np.random.default_rng(seed)
    wins = 0
    gaps = []
    for k in range(n_pairs):
        bg = make_background(organ, seed=int(rng.integers(2**31)), shape=shape)
        radii = tuple(float(r) for r in rng.uniform(5.0, 8.0, size=3))
        center = tuple(
            int(rng.integers(int(np.ceil(r)) + 1, d - int(np.ceil(r)) - 2 + 1))
            for r, d in zip(radii, shape)
        )
        mask = ellipsoid_mask(shape, center, radii)
        sample_seed = int(rng.integers(2**31))
        out_low = synthesize_tumor(
            ae, denoiser, stats, bg, mask, text_low, s, seed=sample_seed
        )
        out_high = synthesize_tumor(
            ae, denoiser, stats, bg, mask, text_high, s, seed=sample_seed
        )
        sel = mask.data.astype(bool)
        mean_low = float(out_low.data[sel].mean())
        mean_high = float(out_high.data[sel].mean())
        gaps.append(mean_high - mean_low)
        if mean_low < mean_high:
            wins += 1
    return {"wins": wins, "n_pairs": n_pairs, "mean_gap": float(np.mean(gaps))}


def feature_distance_probe(
    items: list[TrainingItem],
    denoiser: ConditionalUNet3d,
    s: NoiseSchedule,
    n_triplets: int = 50,
    seed: int = 99,
) -> dict:
    """Intra-text vs inter-text feature distances on held-out triplets."""
    rng = np.random.default_rng(seed)
    draws = build_triplets(items, n_triplets, rng)
    randomness = draw_triplet_randomness(draws, items, s, rng)
    dtype = next(denoiser.parameters()).dtype
    intra, inter = [], []
    denoiser.eval()
    with torch.no_grad():
        for i, d in enumerate(draws):
            t = int(randomness.t[i])

            def branch(item_idx, text_item_idx, variant, eps):
                item = items[item_idx]
                text = items[text_item_idx].text_vectors[variant][None].to(dtype)
                abar = s.abar(t)
                z_t = (
                    abar ** 0.5 * item.patch.z0[None].to(dtype)
                    + (1 - abar) ** 0.5 * eps[None].to(dtype)
                )
                _, feats = denoiser(
                    z_t,
                    torch.tensor([t]),
                    item.patch.z_healthy[None].to(dtype),
                    item.patch.mask_latent[None].to(dtype),
                    text,
                    return_features=True,
                )
                return extract_tumor_feature(
                    feats, item.patch.mask_latent[None].to(dtype)
                )[0]

            fa = branch(d.anchor, d.anchor, d.anchor_variant, randomness.eps_anchor[i])
            fp = branch(
                d.positive, d.positive, d.positive_variant, randomness.eps_positive[i]
            )
            fn = branch(
                d.anchor, d.negative_text_from, d.negative_variant,
                randomness.eps_anchor[i],
            )
            intra.append(float(torch.linalg.norm(fa - fp)))
            inter.append(float(torch.linalg.norm(fa - fn)))
    return {
        "mean_intra": float(np.mean(intra)),
        "mean_inter": float(np.mean(inter)),
        "n_triplets": len(draws),
    }
