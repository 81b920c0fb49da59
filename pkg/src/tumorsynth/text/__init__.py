from .vocabulary import Vocabulary, VocabEntry, load_vocabulary, CATEGORIES
from .embedding import TextEmbedding, embed_text, cosine, validate_similarity, DEFAULT_DIM
from .client import (
    LMClient,
    MockTransport,
    HTTPTransport,
    TransportError,
    mock_client,
    render_frame,
    SENTENCE_FRAMES,
    QUALIFIERS,
)
from .pipeline import (
    RadiologyReport,
    DescriptorSet,
    ReportVariantSet,
    extract_descriptors,
    generate_variants,
    GenerationExhaustedError,
    DEFAULT_NUM_VARIANTS,
    DEFAULT_SIMILARITY_THRESHOLD,
)

__all__ = [
    "Vocabulary",
    "VocabEntry",
    "load_vocabulary",
    "CATEGORIES",
    "TextEmbedding",
    "embed_text",
    "cosine",
    "validate_similarity",
    "DEFAULT_DIM",
    "LMClient",
    "MockTransport",
    "HTTPTransport",
    "TransportError",
    "mock_client",
    "render_frame",
    "SENTENCE_FRAMES",
    "QUALIFIERS",
    "RadiologyReport",
    "DescriptorSet",
    "ReportVariantSet",
    "extract_descriptors",
    "generate_variants",
    "GenerationExhaustedError",
    "DEFAULT_NUM_VARIANTS",
    "DEFAULT_SIMILARITY_THRESHOLD",
]
