"""Descriptor vocabulary: per-organ descriptive phrases with categories.

Shipped as a data file so the term set can grow without code changes.
Matching is case-insensitive, word-bounded, longest-phrase-first, and
canonicalizes surface variants (aliases) onto their head phrase.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

CATEGORIES = ("texture", "margin", "attenuation", "pathology")


@dataclass(frozen=True)
class VocabEntry:
    phrase: str
    category: str
    aliases: tuple[str, ...] = ()


@dataclass
class Vocabulary:
    entries: dict[str, tuple[VocabEntry, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for organ, organ_entries in self.entries.items():
            if not organ_entries:
                raise ValueError(f"vocabulary for {organ!r} is empty")
            phrases = [e.phrase for e in organ_entries]
            if len(phrases) != len(set(phrases)):
                raise ValueError(f"duplicate phrases for {organ!r}")
            for e in organ_entries:
                if e.category not in CATEGORIES:
                    raise ValueError(f"unknown category {e.category!r} ({e.phrase})")

    @property
    def organs(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def phrases(self, organ: str) -> tuple[str, ...]:
        return tuple(e.phrase for e in self._organ(organ))

    def category_of(self, organ: str, phrase: str) -> str:
        for e in self._organ(organ):
            if e.phrase == phrase:
                return e.category
        raise KeyError(f"{phrase!r} not in {organ} vocabulary")

    def contains(self, organ: str, phrase: str) -> bool:
        return any(e.phrase == phrase for e in self._organ(organ))

    def _organ(self, organ: str) -> tuple[VocabEntry, ...]:
        try:
            return self.entries[organ]
        except KeyError:
            raise KeyError(f"no vocabulary for organ {organ!r}") from None

    def match_terms(self, organ: str, text: str) -> list[str]:
        """Scan `text` for vocabulary phrases of `organ`.

        Longest surface forms win; overlapping shorter matches inside an
        already-claimed span are ignored. Returns canonical phrases,
        deduplicated, ordered by first appearance.
        """
        surface_to_canon = []
        for e in self._organ(organ):
            surface_to_canon.append((e.phrase, e.phrase))
            for alias in e.aliases:
                surface_to_canon.append((alias, e.phrase))
        surface_to_canon.sort(key=lambda sc: -len(sc[0]))

        lowered = text.lower()
        claimed = [False] * len(lowered)
        hits: list[tuple[int, str]] = []
        for surface, canon in surface_to_canon:
            pattern = r"\b" + re.escape(surface.lower()) + r"\b"
            for match in re.finditer(pattern, lowered):
                a, b = match.span()
                if any(claimed[a:b]):
                    continue
                for i in range(a, b):
                    claimed[i] = True
                hits.append((a, canon))
        hits.sort()
        seen = set()
        ordered = []
        for _, canon in hits:
            if canon not in seen:
                seen.add(canon)
                ordered.append(canon)
        return ordered


def _from_mapping(raw: dict) -> Vocabulary:
    entries = {
        organ: tuple(
            VocabEntry(
                phrase=item["phrase"],
                category=item["category"],
                aliases=tuple(item.get("aliases", ())),
            )
            for item in items
        )
        for organ, items in raw.items()
    }
    return Vocabulary(entries)


def load_vocabulary(path: str | Path | None = None) -> Vocabulary:
    """Load the bundled vocabulary, or one from an explicit JSON file."""
    if path is None:
        raw = json.loads(
            resources.files("tumorsynth.text").joinpath("data/vocabulary.json").read_text()
        )
    else:
        raw = json.loads(Path(path).read_text())
    return _from_mapping(raw)
