"""Language-model client boundary.

Requests and responses travel as single JSON lines over an abstract
transport, so the same client code runs against the in-process mock or
an external HTTP endpoint. The mock is fully deterministic.
"""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass
from typing import Protocol

from .vocabulary import Vocabulary

EXTRACT_PROMPT = (
    "List the texture and margin descriptor phrases that characterize the "
    "tumor in this report."
)
GENERATE_PROMPT = (
    "Rewrite the lesion description with a different sentence structure, "
    "keeping every descriptor phrase verbatim."
)


class TransportError(RuntimeError):
    """Transport-level failure; the request may be retried."""


class Transport(Protocol):
    def roundtrip(self, line: str) -> str: ...


@dataclass
class LMClient:
    transport: Transport

    def complete(self, role: str, prompt: str, payload: str) -> str:
        if role not in ("extract", "generate"):
            raise ValueError(f"unknown role {role!r}")
        request = json.dumps(
            {"role": role, "prompt": prompt, "payload": payload}, sort_keys=True
        )
        reply = self.transport.roundtrip(request)
        try:
            return json.loads(reply)["text"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise TransportError(f"malformed reply: {reply!r}") from exc


# Sentence frames for the mock generator. Frame 0 is the canonical form
# produced by descriptor extraction; combined with the qualifier bank it
# yields 144 distinct phrasings per descriptor set.
SENTENCE_FRAMES = (
    "a {t} lesion in the {o}",
    "a {t} lesion is seen in the {o}",
    "a {t} lesion is noted in the {o}",
    "there is a {t} lesion in the {o}",
    "a {t} lesion is present in the {o}",
    "a {t} mass in the {o}",
    "a {t} lesion is identified in the {o}",
    "a {t} focal lesion in the {o}",
    "a {t} lesion appears in the {o}",
    "a small {t} lesion in the {o}",
    "the {o} shows a {t} lesion",
    "a {t} lesion within the {o}",
)

QUALIFIERS = (
    "",
    " again",
    " unchanged",
    " as above",
    " from prior",
    " on imaging",
    " at this level",
    " as described",
    " on this exam",
    " in the interval",
    " per protocol",
    " without change",
)


def render_frame(terms: list[str] | tuple[str, ...], organ: str, index: int) -> str:
    n_combos = len(SENTENCE_FRAMES) * len(QUALIFIERS)
    frame = SENTENCE_FRAMES[index % len(SENTENCE_FRAMES)]
    qualifier = QUALIFIERS[(index // len(SENTENCE_FRAMES)) % len(QUALIFIERS)]
    if index >= n_combos:
        # Beyond the combo space, disambiguate explicitly; callers that
        # need distinct strings past 144 variants still get them.
        qualifier += f" (series {index // n_combos + 1})"
    joined = " ".join(terms)
    body = frame.format(t=joined, o=organ) if joined else frame.format(
        t="", o=organ
    ).replace("  ", " ")
    return body + qualifier


@dataclass
class MockTransport:
    """Deterministic in-process stand-in for an external language model."""

    vocab: Vocabulary

    def roundtrip(self, line: str) -> str:
        request = json.loads(line)
        payload = json.loads(request["payload"])
        if request["role"] == "extract":
            terms = self.vocab.match_terms(payload["organ"], payload["text"])
            text = "; ".join(terms)
        else:
            text = render_frame(
                payload["terms"], payload["organ"], int(payload["index"])
            )
        return json.dumps({"text": text})


@dataclass
class HTTPTransport:
    """Thin adapter posting request lines to an external endpoint."""

    url: str
    timeout: float = 30.0

    def roundtrip(self, line: str) -> str:
        req = urllib.request.Request(
            self.url,
            data=line.encode("utf-8"),
            headers={"Content-Type": "application/x-ndjson"},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read().decode("utf-8").splitlines()[0]
        except OSError as exc:
            raise TransportError(str(exc)) from exc


def mock_client(vocab: Vocabulary) -> LMClient:
    return LMClient(MockTransport(vocab))
