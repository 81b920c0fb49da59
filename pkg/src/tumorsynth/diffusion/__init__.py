from .schedule import (
    NoiseSchedule,
    build_schedule,
    forward_noise,
    estimate_z0,
    DEFAULT_T,
    DEFAULT_BETA_START,
    DEFAULT_BETA_END,
)
from .unet import (
    DenoiserConfig,
    ConditionalUNet3d,
    build_denoiser,
    zero_text_conditioning,
    randomize_text_conditioning,
    downsample_mask,
)
from .sampler import (
    ConditionBundle,
    UNetPredictor,
    OracleDenoiser,
    predict_noise,
    denoise_step,
    sample_latent,
    synthesize_tumor,
)
from .latent import (
    LatentStats,
    compute_latent_stats,
    standardize,
    unstandardize,
    PreparedPatch,
    prepare_patch,
)
from .loss import TrainingItem, LdmDraw, draw_randomness, ldm_loss

__all__ = [
    "NoiseSchedule", "build_schedule", "forward_noise", "estimate_z0",
    "DEFAULT_T", "DEFAULT_BETA_START", "DEFAULT_BETA_END",
    "DenoiserConfig", "ConditionalUNet3d", "build_denoiser",
    "zero_text_conditioning", "randomize_text_conditioning", "downsample_mask",
    "ConditionBundle", "UNetPredictor", "OracleDenoiser",
    "predict_noise", "denoise_step", "sample_latent", "synthesize_tumor",
    "LatentStats", "compute_latent_stats", "standardize", "unstandardize",
    "PreparedPatch", "prepare_patch",
    "TrainingItem", "LdmDraw", "draw_randomness", "ldm_loss",
]
