"""Texture feature extraction over masked tumor regions.

The feature registry (a data file) fixes the vector order, so the set
can grow without code changes. Intensity statistics use population
moments; histogram and co-occurrence binning quantize the fixed [0, 1]
range into 32 levels, which makes the whole vector invariant to where
the region sits inside the volume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..volumes.grid import ContractError, TumorMask, Volume

N_BINS = 32

# 13 unique 3D directions at Chebyshev distance 1: every nonzero offset
# whose first nonzero component is positive (the symmetric matrix covers
# the opposite directions).
def _canonical_offsets() -> tuple[tuple[int, int, int], ...]:
    out = []
    for dz in (0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dz == 0 and (dy < 0 or (dy, dx) <= (0, 0)):
                    continue
                out.append((dz, dy, dx))
    return tuple(out)


GLCM_OFFSETS = _canonical_offsets()
assert len(GLCM_OFFSETS) == 13


@dataclass(frozen=True)
class RadiomicsVector:
    features: np.ndarray
    feature_names: tuple[str, ...]
    source_id: str
    degenerate: bool = False

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", arr)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(arr) != len(self.feature_names):
            raise ContractError("feature vector and name list disagree")
        if not np.all(np.isfinite(arr)):
            raise ContractError("non-finite feature values")

    def as_dict(self) -> dict:
        return dict(zip(self.feature_names, self.features.tolist()))


def load_registry() -> tuple[str, ...]:
    raw = json.loads(
        resources.files("tumorsynth.radiomics").joinpath("registry.json").read_text()
    )
    return tuple(item["name"] for item in raw["features"])


REGISTRY = load_registry()


def _bin_values(x: np.ndarray) -> np.ndarray:
    return np.minimum((x * N_BINS).astype(np.int64), N_BINS - 1)


def _first_order(x: np.ndarray) -> dict:
    mean = x.mean()
    var = x.var()  # population
    centered = x - mean
    if var > 0:
        m3 = np.mean(centered**3)
        m4 = np.mean(centered**4)
        skew = m3 / var**1.5
        kurt = m4 / var**2
    else:
        skew = 0.0
        kurt = 0.0
    hist = np.bincount(_bin_values(x), minlength=N_BINS).astype(np.float64)
    p = hist / hist.sum()
    nz = p[p > 0]
    return {
        "mean": mean,
        "median": np.median(x),
        "minimum": x.min(),
        "maximum": x.max(),
        "range": x.max() - x.min(),
        "variance": var,
        "std": np.sqrt(var),
        "skewness": skew,
        "kurtosis": kurt,
        "energy": np.sum(x**2),
        "rms": np.sqrt(np.mean(x**2)),
        "entropy": float(-(nz * np.log2(nz)).sum()),
        "uniformity": float((p**2).sum()),
        "mad": np.mean(np.abs(centered)),
        "iqr": np.percentile(x, 75) - np.percentile(x, 25),
        "p10": np.percentile(x, 10),
        "p25": np.percentile(x, 25),
        "p90": np.percentile(x, 90),
    }


def glcm_matrix(
    bins: np.ndarray, mask: np.ndarray, offset: tuple[int, int, int]
) -> np.ndarray:
    """Symmetric co-occurrence counts for one offset (pairs inside mask)."""
    dz, dy, dx = offset
    shape = bins.shape

    def sl(d, n):
        if d >= 0:
            return slice(0, n - d), slice(d, n)
        return slice(-d, n), slice(0, n + d)

    (az, bz), (ay, by), (ax, bx) = (sl(dz, shape[0]), sl(dy, shape[1]), sl(dx, shape[2]))
    m_a = mask[az, ay, ax]
    m_b = mask[bz, by, bx]
    valid = m_a & m_b
    va = bins[az, ay, ax][valid]
    vb = bins[bz, by, bx][valid]
    counts = np.zeros((N_BINS, N_BINS), dtype=np.float64)
    np.add.at(counts, (va, vb), 1.0)
    return counts + counts.T


def _glcm_features(p: np.ndarray) -> dict:
    idx = np.arange(N_BINS, dtype=np.float64)
    ii = idx[:, None]
    jj = idx[None, :]
    diff = ii - jj
    mu_x = float((p.sum(axis=1) * idx).sum())
    mu_y = float((p.sum(axis=0) * idx).sum())
    sig_x = float(np.sqrt((p.sum(axis=1) * (idx - mu_x) ** 2).sum()))
    sig_y = float(np.sqrt((p.sum(axis=0) * (idx - mu_y) ** 2).sum()))
    nz = p[p > 0]
    if sig_x * sig_y > 0:
        corr = float(((p * ii * jj).sum() - mu_x * mu_y) / (sig_x * sig_y))
    else:
        corr = 1.0
    spread = ii + jj - mu_x - mu_y
    return {
        "glcm_contrast": float((p * diff**2).sum()),
        "glcm_correlation": corr,
        "glcm_dissimilarity": float((p * np.abs(diff)).sum()),
        "glcm_homogeneity": float((p / (1.0 + diff**2)).sum()),
        "glcm_asm": float((p**2).sum()),
        "glcm_entropy": float(-(nz * np.log2(nz)).sum()),
        "glcm_cluster_shade": float((p * spread**3).sum()),
        "glcm_cluster_prominence": float((p * spread**4).sum()),
    }


def extract_features(v: Volume, m: TumorMask, source_id: str = "") -> RadiomicsVector:
    """26-feature texture vector over the masked region (deterministic)."""
    if v.shape != m.shape:
        raise ContractError(f"volume {v.shape} and mask {m.shape} differ")
    if m.is_empty():
        raise ContractError("empty mask")
    if not v.normalized:
        raise ContractError("radiomics features expect a normalized volume")
    inside = m.data.astype(bool)
    x = v.data.astype(np.float64)[inside]

    values = _first_order(x)

    bins = _bin_values(np.clip(v.data.astype(np.float64), 0.0, 1.0))
    totals = np.zeros((N_BINS, N_BINS), dtype=np.float64)
    per_offset = []
    for off in GLCM_OFFSETS:
        counts = glcm_matrix(bins, inside, off)
        if counts.sum() > 0:
            per_offset.append(counts / counts.sum())
        totals += counts
    degenerate = not per_offset
    if degenerate:
        values.update({name: 0.0 for name in REGISTRY if name.startswith("glcm_")})
    else:
        acc: dict[str, float] = {}
        for p in per_offset:
            for name, val in _glcm_features(p).items():
                acc[name] = acc.get(name, 0.0) + val
        values.update({k: v_ / len(per_offset) for k, v_ in acc.items()})

    missing = [name for name in REGISTRY if name not in values]
    if missing:
        raise ContractError(f"registry names without implementations: {missing}")
    vector = np.array([values[name] for name in REGISTRY], dtype=np.float64)
    return RadiomicsVector(vector, REGISTRY, source_id, degenerate=degenerate)
