"""Deterministic bag-of-words text embeddings.

A signed-hash embedder stands in for a learned text encoder so the whole
pipeline runs without network access or model weights. Same bytes in,
same vector out, in any process. A real encoder can be swapped in behind
the same call signature.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from hashlib import blake2b

import numpy as np

DEFAULT_DIM = 128

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class TextEmbedding:
    vector: np.ndarray
    source_text: str

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", vec)
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding has non-finite entries")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} != 1")


def embed_text(text: str, dim: int = DEFAULT_DIM) -> TextEmbedding:
    """Hash tokens into `dim` signed buckets and L2-normalize."""
    if not text or not text.strip():
        raise ValueError("cannot embed empty text")
    vec = np.zeros(dim, dtype=np.float64)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if not token:
            continue
        digest = blake2b(token.encode("utf-8"), digest_size=8).digest()
        bucket = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError(f"text {text!r} produced a zero embedding")
    return TextEmbedding(vec / norm, text)


def cosine(a: TextEmbedding, b: TextEmbedding) -> float:
    if np.array_equal(a.vector, b.vector):
        return 1.0
    return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))


def validate_similarity(
    candidate: str, reference: str, threshold: float
) -> tuple[float, bool]:
    """Cosine similarity of the two embedded texts and a pass flag."""
    if not (-1.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must be in [-1, 1], got {threshold}")
    score = cosine(embed_text(candidate), embed_text(reference))
    return score, score >= threshold
