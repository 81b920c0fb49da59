"""3D volume and mask containers plus the standard CT preprocessing chain.

Axis convention is (D, H, W) with W fastest in memory. Intensities are
Hounsfield units until `preprocess` maps them into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

HU_CLIP_MIN = -175.0
HU_CLIP_MAX = 250.0


class ContractError(ValueError):
    """An operation was called outside its stated preconditions."""


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with voxel spacing in mm.

    `normalized` is False for raw HU data and True once values have been
    mapped into [0, 1].
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise ContractError(f"volume data must be 3D, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ContractError(f"spacing components must be > 0, got {spacing}")
        object.__setattr__(self, "spacing", spacing)
        if self.normalized:
            lo, hi = float(data.min()), float(data.max())
            if lo < -1e-6 or hi > 1 + 1e-6:
                raise ContractError(
                    f"normalized volume has values outside [0,1]: [{lo}, {hi}]"
                )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class TumorMask:
    """Binary mask aligned to a Volume (same (D, H, W) shape)."""

    data: np.ndarray = field()

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ContractError(f"mask must be 3D, got shape {data.shape}")
        uniq = np.unique(data)
        if not np.all(np.isin(uniq, (0, 1))):
            raise ContractError(f"mask values must be in {{0,1}}, got {uniq}")
        object.__setattr__(self, "data", data.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def voxel_count(self) -> int:
        return int(self.data.sum())

    def is_empty(self) -> bool:
        return not self.data.any()


def preprocess(v: Volume) -> Volume:
    """Clip HU to [-175, 250] and rescale linearly into [0, 1].

    Raises ContractError if the volume is already normalized.
    """
    if v.normalized:
        raise ContractError("volume is already normalized")
    clipped = np.clip(v.data, HU_CLIP_MIN, HU_CLIP_MAX)
    scaled = (clipped - HU_CLIP_MIN) / (HU_CLIP_MAX - HU_CLIP_MIN)
    return Volume(scaled.astype(np.float32), spacing=v.spacing, normalized=True)


def _bbox_center(mask: np.ndarray) -> tuple[int, int, int]:
    idx = np.nonzero(mask)
    return tuple(int((i.min() + i.max()) // 2) for i in idx)


def crop_patch(
    v: Volume,
    m: TumorMask,
    size: tuple[int, int, int],
    center: tuple[int, int, int] | None = None,
) -> tuple[Volume, TumorMask]:
    """Extract a patch of `size`, centered on the mask's bounding-box center.

    The window is clamped so it always lies inside the volume. An explicit
    `center` may be supplied for empty masks (placement without a lesion).
    """
    if v.shape != m.shape:
        raise ContractError(f"volume {v.shape} and mask {m.shape} differ")
    size = tuple(int(s) for s in size)
    if any(s < 1 for s in size):
        raise ContractError(f"patch size must be >= 1, got {size}")
    if any(s > d for s, d in zip(size, v.shape)):
        raise ContractError(f"patch size {size} exceeds volume shape {v.shape}")
    if center is None:
        if m.is_empty():
            raise ContractError("mask is empty; supply an explicit placement center")
        center = _bbox_center(m.data)

    starts = []
    for c, s, d in zip(center, size, v.shape):
        start = c - s // 2
        starts.append(int(np.clip(start, 0, d - s)))
    sl = tuple(slice(s, s + e) for s, e in zip(starts, size))
    return (
        Volume(v.data[sl].copy(), spacing=v.spacing, normalized=v.normalized),
        TumorMask(m.data[sl].copy()),
    )


def magnify_mask(m: TumorMask, factor: float) -> TumorMask:
    """Scale a mask about its centroid by `factor` >= 1 (nearest neighbor).

    The result is unioned with the input so the covered volume never
    shrinks, even when scaling pushes part of the region out of bounds.
    """
    if factor < 1:
        raise ContractError(f"magnification factor must be >= 1, got {factor}")
    if m.is_empty():
        raise ContractError("cannot magnify an empty mask")
    if factor == 1:
        return TumorMask(m.data.copy())

    centroid = np.array(ndimage.center_of_mass(m.data))
    coords = np.indices(m.shape, dtype=np.float64)
    # Inverse map: an output voxel is on if its preimage (shrunk toward the
    # centroid) rounds to an input voxel that is on.
    src = [
        np.rint((coords[a] - centroid[a]) / factor + centroid[a]).astype(np.int64)
        for a in range(3)
    ]
    inside = np.ones(m.shape, dtype=bool)
    for a in range(3):
        inside &= (src[a] >= 0) & (src[a] < m.shape[a])
    out = np.zeros(m.shape, dtype=np.uint8)
    ii = tuple(np.clip(src[a], 0, m.shape[a] - 1) for a in range(3))
    out[inside] = m.data[ii][inside]
    out |= m.data
    return TumorMask(out)


def resample_isotropic(v: Volume, target_mm: float = 1.0) -> Volume:
    """Trilinear resample to isotropic voxel spacing (ingestion path only)."""
    if target_mm <= 0:
        raise ContractError("target spacing must be > 0")
    factors = tuple(s / target_mm for s in v.spacing)
    if all(abs(f - 1.0) < 1e-9 for f in factors):
        return v
    data = ndimage.zoom(v.data.astype(np.float64), factors, order=1)
    if v.normalized:
        data = np.clip(data, 0.0, 1.0)
    return Volume(
        data.astype(np.float32),
        spacing=(target_mm, target_mm, target_mm),
        normalized=v.normalized,
    )
