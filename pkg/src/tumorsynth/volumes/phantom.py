"""Procedural phantom volumes with descriptor-controlled tumor appearance.

Each descriptor term maps to measurable constraints on the generated
tumor (mean intensity shift, intensity spread, boundary transition
width). The constraints, not the texture generator, are the contract;
the generator itself is band-limited value noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import ContractError, TumorMask, Volume

ORGANS = ("liver", "pancreas", "kidney")

_ORGAN_BASE = {"liver": 0.55, "pancreas": 0.50, "kidney": 0.45}

_BG_NOISE_SD = 0.03
_DEFAULT_OFFSET = -0.25
_DEFAULT_NOISE_SD = 0.05
_DEFAULT_FEATHER = 0.8
_SHARP_FEATHER = 0.0
_ILL_DEFINED_FEATHER = 6.0


class ProfileError(ContractError):
    """Descriptor profile is invalid or self-contradictory."""


@dataclass(frozen=True)
class _TermEffect:
    category: str
    offset: float | None = None
    noise_sd: float | None = None
    feather: float | None = None


# Appearance effects per descriptor term. Offsets are relative to the
# organ's base intensity, in normalized units; feather is the boundary
# transition span in voxels (0 = hard edge).
PHANTOM_TERMS: dict[str, _TermEffect] = {
    "hypodense": _TermEffect("attenuation", offset=-0.30),
    "hypoattenuating": _TermEffect("attenuation", offset=-0.30),
    "hypoenhancing": _TermEffect("attenuation", offset=-0.22),
    "hyperenhancing": _TermEffect("attenuation", offset=+0.30),
    "enhancing": _TermEffect("attenuation", offset=+0.22),
    "cystic": _TermEffect(
        "pathology", offset=-0.20, noise_sd=0.006, feather=_SHARP_FEATHER
    ),
    "heterogeneous": _TermEffect("texture", noise_sd=0.12),
    "ill-defined": _TermEffect("margin", feather=_ILL_DEFINED_FEATHER),
    "well-defined": _TermEffect("margin", feather=_SHARP_FEATHER),
}

_NEGATIVE_ATTEN = {"hypodense", "hypoattenuating", "hypoenhancing"}
_POSITIVE_ATTEN = {"hyperenhancing", "enhancing"}


@dataclass(frozen=True)
class PhantomSpec:
    organ: str
    descriptor_profile: tuple[str, ...]
    tumor_center: tuple[int, int, int]
    tumor_radii: tuple[float, float, float]
    seed: int
    shape: tuple[int, int, int] = (32, 32, 32)

    def __post_init__(self):
        object.__setattr__(
            self, "descriptor_profile", tuple(self.descriptor_profile)
        )
        if self.organ not in ORGANS:
            raise ProfileError(f"unknown organ {self.organ!r}")
        for term in self.descriptor_profile:
            if term not in PHANTOM_TERMS:
                raise ProfileError(f"unknown descriptor term {term!r}")
        if any(r <= 0 for r in self.tumor_radii):
            raise ProfileError(f"tumor radii must be > 0, got {self.tumor_radii}")
        for c, r, d in zip(self.tumor_center, self.tumor_radii, self.shape):
            if c - r < 0 or c + r > d - 1:
                raise ProfileError(
                    f"tumor ellipsoid (center {self.tumor_center}, radii "
                    f"{self.tumor_radii}) does not fit inside shape {self.shape}"
                )
        _check_contradictions(self.descriptor_profile)


def _check_contradictions(profile: tuple[str, ...]) -> None:
    terms = set(profile)
    neg = terms & _NEGATIVE_ATTEN
    pos = terms & _POSITIVE_ATTEN
    if neg and pos:
        raise ProfileError(f"contradictory attenuation terms: {sorted(neg | pos)}")
    if "ill-defined" in terms and "well-defined" in terms:
        raise ProfileError("contradictory margin terms: ill-defined + well-defined")
    if "cystic" in terms and "heterogeneous" in terms:
        raise ProfileError("contradictory texture terms: cystic + heterogeneous")
    if "cystic" in terms and "ill-defined" in terms:
        raise ProfileError("cystic lesions have clear boundaries; ill-defined conflicts")
    if "cystic" in terms and pos:
        raise ProfileError(f"cystic conflicts with {sorted(pos)}")


def _value_noise(shape, rng, octaves: int = 3, persistence: float = 0.5,
                 base_period: int = 8) -> np.ndarray:
    """Band-limited lattice noise, zero-mean, unit-normalized SD."""
    out = np.zeros(shape, dtype=np.float64)
    amp = 1.0
    coords = np.indices(shape, dtype=np.float64)
    for octave in range(octaves):
        period = max(base_period / (2 ** octave), 2.0)
        lattice_shape = tuple(int(np.ceil(d / period)) + 2 for d in shape)
        lattice = rng.random(lattice_shape)
        pts = (coords / period).reshape(3, -1)
        layer = ndimage.map_coordinates(lattice, pts, order=1, mode="nearest")
        out += amp * (layer.reshape(shape) - 0.5)
        amp *= persistence
    sd = out.std()
    return out / sd if sd > 0 else out


def _resolve_profile(profile: tuple[str, ...]):
    offset = None
    noise_sd = None
    feather = None
    for term in profile:
        eff = PHANTOM_TERMS[term]
        if eff.offset is not None and eff.category == "attenuation":
            offset = eff.offset
        if eff.noise_sd is not None:
            noise_sd = eff.noise_sd
        if eff.feather is not None and eff.category == "margin":
            feather = eff.feather
    # cystic supplies fallbacks without overriding explicit choices
    if "cystic" in profile:
        if offset is None:
            offset = PHANTOM_TERMS["cystic"].offset
        feather = _SHARP_FEATHER
    if offset is None:
        offset = _DEFAULT_OFFSET
    if noise_sd is None:
        noise_sd = _DEFAULT_NOISE_SD
    if feather is None:
        feather = _DEFAULT_FEATHER
    return offset, noise_sd, feather


def make_background(organ: str, seed: int, shape: tuple[int, int, int] = (32, 32, 32)) -> Volume:
    """Tumor-free textured tissue patch (healthy context for synthesis)."""
    if organ not in ORGANS:
        raise ProfileError(f"unknown organ {organ!r}")
    rng = np.random.default_rng(seed)
    data = np.clip(
        _ORGAN_BASE[organ] + _BG_NOISE_SD * _value_noise(shape, rng), 0.0, 1.0
    )
    return Volume(data.astype(np.float32), spacing=(1.0, 1.0, 1.0), normalized=True)


def ellipsoid_mask(
    shape: tuple[int, int, int],
    center: tuple[int, int, int],
    radii: tuple[float, float, float],
) -> TumorMask:
    coords = np.indices(shape, dtype=np.float64)
    rho = np.sqrt(
        sum(((coords[a] - center[a]) / radii[a]) ** 2 for a in range(3))
    )
    mask = (rho <= 1.0).astype(np.uint8)
    if not mask.any():
        raise ProfileError("radii too small: empty mask at this grid resolution")
    return TumorMask(mask)


def render_reference_text(terms: tuple[str, ...] | list[str], organ: str) -> str:
    joined = " ".join(terms)
    if joined:
        return f"a {joined} lesion in the {organ}"
    return f"a lesion in the {organ}"


def make_phantom(spec: PhantomSpec) -> tuple[Volume, TumorMask, str]:
    """Generate a deterministic phantom (volume, mask, reference sentence)."""
    rng = np.random.default_rng(spec.seed)
    shape = spec.shape
    base = _ORGAN_BASE[spec.organ]
    offset, tumor_sd, feather = _resolve_profile(spec.descriptor_profile)

    bg = base + _BG_NOISE_SD * _value_noise(shape, rng)
    tumor_field = base + offset + tumor_sd * _value_noise(shape, rng, base_period=4)

    coords = np.indices(shape, dtype=np.float64)
    rho = np.sqrt(
        sum(
            ((coords[a] - spec.tumor_center[a]) / spec.tumor_radii[a]) ** 2
            for a in range(3)
        )
    )
    mask = (rho <= 1.0).astype(np.uint8)
    if not mask.any():
        raise ProfileError("tumor radii too small: empty mask at this grid resolution")

    if feather <= 0:
        alpha = mask.astype(np.float64)
    else:
        # Transition of ~`feather` voxels centered on the nominal boundary.
        r_eff = float(np.mean(spec.tumor_radii))
        alpha = np.clip((1.0 - rho) * r_eff / feather + 0.5, 0.0, 1.0)

    data = np.clip(bg * (1.0 - alpha) + tumor_field * alpha, 0.0, 1.0)
    volume = Volume(data.astype(np.float32), spacing=(1.0, 1.0, 1.0), normalized=True)
    text = render_reference_text(spec.descriptor_profile, spec.organ)
    return volume, TumorMask(mask), text


def measure_region_stats(v: Volume, m: TumorMask) -> dict:
    """Mean shift, spread, and boundary width of a masked region.

    Shared by the phantom contract tests and the failure-description
    classifier so both sides of the loop use identical definitions.
    The boundary width is the 10-90 transition span (in voxels) of the
    monotone envelope of the radial intensity profile.
    """
    if m.is_empty():
        raise ContractError("empty mask")
    data = v.data.astype(np.float64)
    inside = m.data.astype(bool)
    outside = ~inside

    # Signed distance to the mask boundary, positive outside.
    dist_out = ndimage.distance_transform_edt(outside)
    dist_in = ndimage.distance_transform_edt(inside)
    signed = np.where(inside, -dist_in, dist_out)

    # Keep the background local: within 8 voxels of the lesion.
    ring = outside & (dist_out <= 8.0) & (dist_out >= 2.0)
    if not ring.any():
        ring = outside
    mean_in = float(data[inside].mean())
    mean_bg = float(data[ring].mean()) if ring.any() else mean_in
    sd_in = float(data[inside].std())

    shells = np.arange(-6, 7)
    profile = np.array(
        [
            data[(signed >= s - 0.5) & (signed < s + 0.5)].mean()
            if ((signed >= s - 0.5) & (signed < s + 0.5)).any()
            else np.nan
            for s in shells
        ]
    )
    inner_sel = np.isfinite(profile) & (shells <= -4)
    outer_sel = np.isfinite(profile) & (shells >= 4)
    p_in = profile[inner_sel].mean() if inner_sel.any() else mean_in
    p_out = profile[outer_sel].mean() if outer_sel.any() else mean_bg
    delta = p_in - p_out
    if abs(delta) < 1e-6:
        width = 0.0
    else:
        frac = np.clip((profile - p_out) / delta, 0.0, 1.0)
        frac = np.where(np.isfinite(frac), frac, 0.0)
        envelope = np.maximum.accumulate(frac[::-1])[::-1]

        def crossing(level):
            for i in range(len(shells) - 1):
                if envelope[i] >= level > envelope[i + 1]:
                    step = max(envelope[i] - envelope[i + 1], 1e-12)
                    return shells[i] + (envelope[i] - level) / step
            return shells[-1] if envelope[-1] >= level else shells[0]

        width = max(float(crossing(0.1) - crossing(0.9)), 0.0)
    return {
        "mean_inside": mean_in,
        "mean_background": mean_bg,
        "mean_shift": mean_in - mean_bg,
        "sd_inside": sd_in,
        "boundary_width": width,
    }
