"""Reference-based quality scores: BLEU and BERTScore.

BLEU here uses a linear brevity factor, ``min(1, c / r)``, rather than the
usual exponential penalty (``standard_bp=True`` switches to the latter). No
smoothing: a zero n-gram precision makes the whole score zero.

BERTScore greedily matches token embeddings by cosine similarity, with no IDF
weighting and no baseline rescaling. Embeddings come from any object with an
``embed(text) -> array of shape (tokens, dim)`` method.
"""

from __future__ import annotations

import hashlib
import math
import os
import re
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import InputError, TransportError

EMBED_URL_ENV = "PROSWITCH_EMBED_URL"
_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Whitespace split after detaching punctuation into its own tokens."""
    return _TOKEN.findall(text)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int) -> float:
    counts = _ngrams(candidate, n)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    max_ref: Counter = Counter()
    for ref in references:
        max_ref |= _ngrams(ref, n)
    clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
    return clipped / total


def closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu(candidate: str, references: Sequence[str], m: int = 4, standard_bp: bool = False) -> float:
    if m < 1:
        raise InputError("m must be >= 1")
    if isinstance(references, str) or not references:
        raise InputError("bleu needs a non-empty list of references")
    cand = tokenize(candidate)
    if not cand:
        return 0.0
    refs = [tokenize(r) for r in references]
    r = closest_ref_length(len(cand), [len(x) for x in refs])
    c = len(cand)
    if standard_bp:
        brevity = 1.0 if c > r else math.exp(1 - r / c)
    else:
        brevity = min(1.0, c / r) if r else 1.0

    precisions = [modified_precision(cand, refs, n) for n in range(1, m + 1)]
    if any(p == 0 for p in precisions):
        return 0.0
    geo = math.exp(math.fsum(math.log(p) for p in precisions) / m)
    return brevity * geo


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class HashedTrigramProvider:
    """Deterministic offline embeddings for tests and dry runs.

    Each token becomes the sum of signed hashed character-trigram indicators
    (of the token padded with ``#``); no context, no model download.
    """

    def __init__(self, dim: int = 64) -> None:
        if dim < 8:
            raise InputError("embedding dimension must be >= 8")
        self.dim = dim

    def _token_vector(self, token: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        padded = f"#{token.lower()}#"
        for i in range(max(1, len(padded) - 2)):
            gram = padded[i:i + 3].encode("utf-8")
            h = int.from_bytes(hashlib.blake2b(gram, digest_size=8).digest(), "little")
            vec[h % self.dim] += 1.0 if (h >> 32) & 1 else -1.0
        if not vec.any():
            vec[0] = 1.0
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise InputError("cannot embed empty text")
        return np.stack([self._token_vector(t) for t in tokens])


class HttpEmbeddingProvider:
    """POSTs ``{"text": ...}`` and expects a JSON array of token vectors
    (bare, or under an ``"embeddings"`` key)."""

    def __init__(self, url: str | None = None, api_key: str | None = None, timeout: float = 60.0,
                 client: httpx.Client | None = None) -> None:
        self.url = url or os.environ.get(EMBED_URL_ENV)
        if not self.url:
            raise InputError(f"no embedding endpoint: pass url or set {EMBED_URL_ENV}")
        self.api_key = api_key or os.environ.get("PROSWITCH_API_KEY")
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._client.post(self.url, json={"text": text}, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise TransportError(f"embedding endpoint returned HTTP {resp.status_code}", status=resp.status_code)
        try:
            payload = resp.json()
            if isinstance(payload, dict):
                payload = payload["embeddings"]
            arr = np.asarray(payload, dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed embedding payload: {exc}") from exc
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise TransportError(f"expected a (tokens, dim) array, got shape {arr.shape}")
        return arr


@dataclass(frozen=True)
class QualityScores:
    bleu: float | None
    bert_precision: float
    bert_recall: float
    bert_f: float


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return x / norms


def bert_score(candidate: str, reference: str, provider: EmbeddingProvider) -> QualityScores:
    if not candidate.strip() or not reference.strip():
        raise InputError("bert_score needs non-empty candidate and reference")
    cand = _unit_rows(np.asarray(provider.embed(candidate), dtype=float))
    ref = _unit_rows(np.asarray(provider.embed(reference), dtype=float))
    sim = cand @ ref.T
    p = float(sim.max(axis=1).mean())
    r = float(sim.max(axis=0).mean())
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return QualityScores(None, p, r, f)
