"""Noise schedule and the closed-form noising/denoising algebra.

Timesteps are 1-indexed: t in [1, T]. Arrays are stored 0-indexed, so
`alpha_bar[t - 1]` is the cumulative attenuation after t steps. The
schedule is float64 throughout; tensor operations accept torch tensors
or numpy arrays of any float dtype.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

DEFAULT_T = 200
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        if self.T < 1 or len(self.beta) != self.T:
            raise ValueError("schedule length mismatch")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ValueError("beta values must lie in (0, 1)")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        recomputed = np.cumprod(self.alpha)
        if np.max(np.abs(recomputed - self.alpha_bar)) > 1e-12:
            raise ValueError("alpha_bar inconsistent with alpha products")

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"t={t} outside [1, {self.T}]")
        return t

    def abar(self, t: int) -> float:
        return float(self.alpha_bar[self._check_t(t) - 1])

    def abar_prev(self, t: int) -> float:
        """Cumulative attenuation before step t (1.0 for t=1)."""
        t = self._check_t(t)
        return float(self.alpha_bar[t - 2]) if t > 1 else 1.0

    def sigma(self, t: int) -> float:
        """Posterior noise scale; zero at the terminal step."""
        t = self._check_t(t)
        if t == 1:
            return 0.0
        beta_t = float(self.beta[t - 1])
        return float(
            np.sqrt(beta_t * (1.0 - self.abar_prev(t)) / (1.0 - self.abar(t)))
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.T).tobytes())
        h.update(self.beta.astype("<f8").tobytes())
        return h.hexdigest()[:16]


def build_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta interpolation between the endpoints over T steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = (
        np.linspace(beta_start, beta_end, T, dtype=np.float64)
        if T > 1
        else np.array([beta_start], dtype=np.float64)
    )
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def forward_noise(z0, t: int, eps, s: NoiseSchedule):
    """z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps."""
    if getattr(eps, "shape", None) != getattr(z0, "shape", None):
        raise ValueError(f"noise shape {eps.shape} != latent shape {z0.shape}")
    abar = s.abar(t)
    return (abar ** 0.5) * z0 + ((1.0 - abar) ** 0.5) * eps


def estimate_z0(z_t, eps_hat, t: int, s: NoiseSchedule):
    """Invert the noising closed form given a noise estimate."""
    if getattr(eps_hat, "shape", None) != getattr(z_t, "shape", None):
        raise ValueError(
            f"noise shape {eps_hat.shape} != latent shape {z_t.shape}"
        )
    abar = s.abar(t)
    return (z_t - ((1.0 - abar) ** 0.5) * eps_hat) / (abar ** 0.5)
