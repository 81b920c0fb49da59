from .model import (
    AEConfig,
    Codebook,
    LatentTensor,
    VQAutoencoder,
    build_autoencoder,
    decode,
    encode,
    quantize,
    quantize_sites,
)
from .train import TrainingDiverged, ae_loss, reconstruction_mse, train_autoencoder

__all__ = [
    "AEConfig",
    "Codebook",
    "LatentTensor",
    "VQAutoencoder",
    "build_autoencoder",
    "decode",
    "encode",
    "quantize",
    "quantize_sites",
    "TrainingDiverged",
    "ae_loss",
    "reconstruction_mse",
    "train_autoencoder",
]
