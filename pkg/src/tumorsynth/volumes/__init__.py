from .grid import (
    Volume,
    TumorMask,
    ContractError,
    preprocess,
    crop_patch,
    magnify_mask,
    resample_isotropic,
    HU_CLIP_MIN,
    HU_CLIP_MAX,
)
from .io import save_volume, load_volume, FormatError, CorruptionError
from .phantom import PhantomSpec, make_phantom, PHANTOM_TERMS, ProfileError

__all__ = [
    "Volume",
    "TumorMask",
    "ContractError",
    "preprocess",
    "crop_patch",
    "magnify_mask",
    "resample_isotropic",
    "HU_CLIP_MIN",
    "HU_CLIP_MAX",
    "save_volume",
    "load_volume",
    "FormatError",
    "CorruptionError",
    "PhantomSpec",
    "make_phantom",
    "PHANTOM_TERMS",
    "ProfileError",
]
