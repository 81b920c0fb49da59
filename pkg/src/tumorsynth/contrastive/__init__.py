from .losses import (
    DEFAULT_MARGIN,
    DEFAULT_LAMBDA,
    extract_tumor_feature,
    contrastive_losses,
    TripletDraw,
    build_triplets,
    validate_triplet,
    TripletRandomness,
    draw_triplet_randomness,
    total_loss,
)

__all__ = [
    "DEFAULT_MARGIN", "DEFAULT_LAMBDA", "extract_tumor_feature",
    "contrastive_losses", "TripletDraw", "build_triplets", "validate_triplet",
    "TripletRandomness", "draw_triplet_randomness", "total_loss",
]
