from .features import (
    RadiomicsVector,
    extract_features,
    glcm_matrix,
    load_registry,
    GLCM_OFFSETS,
    N_BINS,
    REGISTRY,
)
from .diversity import (
    DiversityReport,
    pairwise_cosine,
    diversity_stats,
    compare_methods,
    format_report_table,
    MODES,
)

__all__ = [
    "RadiomicsVector", "extract_features", "glcm_matrix", "load_registry",
    "GLCM_OFFSETS", "N_BINS", "REGISTRY",
    "DiversityReport", "pairwise_cosine", "diversity_stats",
    "compare_methods", "format_report_table", "MODES",
]
