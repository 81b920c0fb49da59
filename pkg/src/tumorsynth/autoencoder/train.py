"""Autoencoder training: reconstruction + codebook + commitment."""

from __future__ import annotations

import numpy as np
import torch

from ..volumes.grid import Volume
from .model import AEConfig, VQAutoencoder, build_autoencoder


class TrainingDiverged(RuntimeError):
    pass


def ae_loss(model: VQAutoencoder, batch: torch.Tensor, beta: float):
    """Total loss and its parts for a (B, 1, D, H, W) batch."""
    recon, _, _, _, cb_loss, commit_loss = model(batch)
    recon_loss = torch.mean((recon - batch) ** 2)
    total = recon_loss + cb_loss + beta * commit_loss
    return total, recon_loss, cb_loss, commit_loss


def _stack(dataset) -> np.ndarray:
    arrays = [p.data if isinstance(p, Volume) else np.asarray(p) for p in dataset]
    return np.stack(arrays).astype(np.float32)


def train_autoencoder(
    dataset,
    cfg: AEConfig,
    steps: int,
    batch_size: int = 8,
    lr: float = 1e-4,
    model: VQAutoencoder | None = None,
    log_every: int = 50,
):
    """Train on normalized patches; returns (model, metrics).

    metrics is a list of per-logged-step dicts plus entries for the first
    and last step. Non-finite loss aborts with diagnostics.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if model is None:
        model = build_autoencoder(cfg)
    metrics: list[dict] = []
    if steps == 0:
        return model, metrics

    data = torch.from_numpy(_stack(dataset))[:, None]
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999))
    model.train()
    for step in range(steps):
        idx = rng.integers(0, data.shape[0], size=min(batch_size, data.shape[0]))
        batch = data[torch.from_numpy(idx)]
        total, recon, cb, commit = ae_loss(model, batch, cfg.commitment_beta)
        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss at step {step}: recon={float(recon)} "
                f"codebook={float(cb)} commitment={float(commit)}"
            )
        opt.zero_grad()
        total.backward()
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            metrics.append(
                {
                    "step": step,
                    "total": float(total.detach()),
                    "recon": float(recon.detach()),
                    "codebook": float(cb.detach()),
                    "commitment": float(commit.detach()),
                }
            )
    model.eval()
    return model, metrics


def reconstruction_mse(model: VQAutoencoder, dataset) -> float:
    """Mean squared reconstruction error over a dataset of patches."""
    data = torch.from_numpy(_stack(dataset))[:, None]
    model.eval()
    with torch.no_grad():
        recon, *_ = model(data)
        return float(torch.mean((recon - data) ** 2))
