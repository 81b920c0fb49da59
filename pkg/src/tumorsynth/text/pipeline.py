"""Report descriptor extraction and variant generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .client import EXTRACT_PROMPT, GENERATE_PROMPT, LMClient, render_frame
from .embedding import validate_similarity
from .vocabulary import Vocabulary

DEFAULT_NUM_VARIANTS = 100
DEFAULT_SIMILARITY_THRESHOLD = 0.6


class GenerationExhaustedError(RuntimeError):
    """Could not collect enough passing variants within the attempt budget."""


@dataclass(frozen=True)
class RadiologyReport:
    id: str
    organ: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("report text is empty")


@dataclass(frozen=True)
class DescriptorSet:
    report_id: str
    organ: str
    terms: tuple[str, ...]
    cleaned_text: str
    no_match: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("descriptor terms must be deduplicated")


@dataclass(frozen=True)
class ReportVariantSet:
    report_id: str
    variants: tuple[str, ...]
    similarity_scores: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(
            self, "similarity_scores", tuple(float(s) for s in self.similarity_scores)
        )
        if len(self.variants) != len(self.similarity_scores):
            raise ValueError("one similarity score per variant required")
        if any(not (-1.0 <= s <= 1.0) for s in self.similarity_scores):
            raise ValueError("similarity scores must lie in [-1, 1]")


def extract_descriptors(
    report: RadiologyReport, client: LMClient, vocab: Vocabulary
) -> DescriptorSet:
    """Pull descriptor terms out of a raw report via the LM client.

    Terms the client returns that are not in the organ's vocabulary are
    dropped. No matches is not an error; the set comes back flagged.
    """
    payload = json.dumps({"organ": report.organ, "text": report.text})
    reply = client.complete("extract", EXTRACT_PROMPT, payload)
    seen = set()
    terms = []
    for piece in reply.split(";"):
        candidates = vocab.match_terms(report.organ, piece.strip()) if piece.strip() else []
        for term in candidates:
            if term not in seen:
                seen.add(term)
                terms.append(term)
    if not terms:
        return DescriptorSet(report.id, report.organ, (), "", no_match=True)
    cleaned = render_frame(terms, report.organ, 0)
    return DescriptorSet(report.id, report.organ, tuple(terms), cleaned)


def generate_variants(
    d: DescriptorSet,
    n: int,
    client: LMClient,
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> ReportVariantSet:
    """Produce `n` distinct variant sentences that keep every term.

    Each candidate is validated against the cleaned text; failing or
    duplicate candidates are re-generated. The attempt budget is 10*n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not d.terms:
        raise ValueError("descriptor set has no terms")
    variants: list[str] = []
    scores: list[float] = []
    seen = set()
    max_attempts = 10 * n
    for attempt in range(max_attempts):
        payload = json.dumps(
            {"terms": list(d.terms), "organ": d.organ, "index": attempt}
        )
        candidate = client.complete("generate", GENERATE_PROMPT, payload)
        if candidate in seen:
            continue
        seen.add(candidate)
        if any(term not in candidate for term in d.terms):
            continue
        score, ok = validate_similarity(candidate, d.cleaned_text, threshold)
        if not ok:
            continue
        variants.append(candidate)
        scores.append(score)
        if len(variants) == n:
            return ReportVariantSet(d.report_id, tuple(variants), tuple(scores))
    raise GenerationExhaustedError(
        f"collected {len(variants)}/{n} passing variants in {max_attempts} attempts"
    )
