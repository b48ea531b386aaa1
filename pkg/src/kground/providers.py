"""Pluggable semantic similarity providers.

Three implementations share one contract: ``score(a, b)`` is symmetric, lies
in [-1, 1], and equals 1 for identical inputs that survive normalization.
The lexical provider is a fully deterministic offline stand-in for a neural
sentence encoder; the remote provider talks to an embedding service over
HTTP and fails loudly instead of substituting a default score.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
import time
import zlib
from typing import Protocol, Sequence

import requests

from .core import FormatError, ProviderError, tokenize_metric

TRIGRAM_DIM = 1 << 18
_TRIGRAM_SEED = 0x5EED1


class ProtocolError(ProviderError):
    """The embedding service answered, but not in the agreed wire format."""


class SimilarityProvider(Protocol):
    name: str

    def score(self, a: str, b: str) -> float: ...


def _normalize(text: str) -> str:
    return " ".join(tokenize_metric(text))


def _cosine(a: dict, b: dict, norm_a: float, norm_b: float) -> float:
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(v * b[k] for k, v in a.items() if k in b)
    return dot / (norm_a * norm_b)


class LexicalTrigramProvider:
    """Cosine over hashed character-trigram counts of metric-normalized text.

    The trigram hash uses a fixed seed and a fixed 2^18 bucket space, so
    scores are byte-identical across processes. Normalized text is padded
    with ``##`` on both sides so even single-character inputs produce
    trigrams (and therefore score 1 against themselves).
    """

    name = "lexical"

    def __init__(self) -> None:
        self._vectors: dict[str, tuple[dict, float]] = {}

    @staticmethod
    def _bucket(trigram: str) -> int:
        return zlib.crc32(trigram.encode("utf-8"), _TRIGRAM_SEED) & (TRIGRAM_DIM - 1)

    def _vector(self, normalized: str) -> tuple[dict, float]:
        cached = self._vectors.get(normalized)
        if cached is not None:
            return cached
        counts: dict[int, int] = {}
        if normalized:
            padded = f"##{normalized}##"
            for i in range(len(padded) - 2):
                bucket = self._bucket(padded[i : i + 3])
                counts[bucket] = counts.get(bucket, 0) + 1
        norm = math.sqrt(sum(c * c for c in counts.values()))
        entry = (counts, norm)
        # concurrent misses recompute identical values, so no lock is needed
        self._vectors[normalized] = entry
        return entry

    def score(self, a: str, b: str) -> float:
        va, na = self._vector(_normalize(a))
        vb, nb = self._vector(_normalize(b))
        return _cosine(va, vb, na, nb)


def lexical_provider() -> LexicalTrigramProvider:
    return LexicalTrigramProvider()


class VectorFileProvider:
    """Cosine over mean token vectors loaded from a word-vector text file."""

    name = "vectors"

    def __init__(self, table: dict, dim: int) -> None:
        self._table = table
        self.dim = dim

    def _embed(self, text: str) -> list[float] | None:
        known = [self._table[t] for t in tokenize_metric(text) if t in self._table]
        if not known:
            return None
        return [sum(vec[i] for vec in known) / len(known) for i in range(self.dim)]

    def score(self, a: str, b: str) -> float:
        va = self._embed(a)
        vb = self._embed(b)
        if va is None or vb is None:
            return 0.0
        return _dense_cosine(va, vb)


def _dense_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)


def vector_file_provider(path) -> VectorFileProvider:
    """Load a text vector file: one ``token v1 v2 ...`` line per token."""
    table: dict[str, list[float]] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if not values:
                raise FormatError(f"{path}:{lineno}: token without vector values")
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric vector value") from exc
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values, got {len(vec)}"
                )
            table[token] = vec
    if dim is None:
        raise FormatError(f"{path}: vector file is empty")
    return VectorFileProvider(table, dim)


class EmbeddingCache:
    """Content-addressed vector cache with atomic get-or-insert."""

    def __init__(self) -> None:
        self._data: dict[str, tuple[float, ...]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: str) -> tuple[float, ...] | None:
        with self._lock:
            vector = self._data.get(key)
            if vector is None:
                self.misses += 1
            else:
                self.hits += 1
            return vector

    def put(self, key: str, vector: Sequence[float]) -> tuple[float, ...]:
        frozen = tuple(float(x) for x in vector)
        with self._lock:
            return self._data.setdefault(key, frozen)

    def __len__(self) -> int:
        return len(self._data)


class RemoteEmbeddingProvider:
    """Client for the embedding service wire protocol (POST /embed).

    Texts are normalized, then looked up in the cache; only misses go over
    the wire, batched into a single request. Network failures are retried
    with exponential backoff and surface as ProviderError after the retry
    budget; malformed responses raise ProtocolError immediately.
    """

    name = "remote"

    def __init__(
        self,
        endpoint_url: str,
        cache: EmbeddingCache,
        timeout: float = 5.0,
        max_retries: int = 3,
        backoff: float = 0.1,
        session: requests.Session | None = None,
    ) -> None:
        self._url = endpoint_url.rstrip("/") + "/embed"
        self._cache = cache
        self._timeout = timeout
        self._max_retries = max_retries
        self._backoff = backoff
        self._session = session or requests.Session()
        self._dim: int | None = None
        self._dim_lock = threading.Lock()

    @staticmethod
    def _key(normalized: str) -> str:
        return hashlib.sha256(normalized.encode("utf-8")).hexdigest()

    def _post(self, texts: list[str]) -> list:
        last_error: Exception | None = None
        for attempt in range(self._max_retries + 1):
            try:
                resp = self._session.post(
                    self._url, json={"texts": texts}, timeout=self._timeout
                )
                if resp.status_code == 200:
                    return self._validate(resp, len(texts))
                last_error = ProviderError(f"HTTP {resp.status_code} from {self._url}")
            except requests.RequestException as exc:
                last_error = exc
            if attempt < self._max_retries:
                time.sleep(self._backoff * (2**attempt))
        raise ProviderError(
            f"embedding service at {self._url} failed after "
            f"{self._max_retries + 1} attempts: {last_error}"
        )

    def _validate(self, resp, expected: int) -> list:
        try:
            body = resp.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProtocolError(f"{self._url}: response is not JSON") from exc
        vectors = body.get("vectors") if isinstance(body, dict) else None
        if not isinstance(vectors, list) or len(vectors) != expected:
            raise ProtocolError(
                f"{self._url}: expected {expected} vectors, got "
                f"{len(vectors) if isinstance(vectors, list) else type(vectors).__name__}"
            )
        for vec in vectors:
            if (
                not isinstance(vec, list)
                or not vec
                or not all(isinstance(x, (int, float)) for x in vec)
            ):
                raise ProtocolError(f"{self._url}: vectors must be non-empty number lists")
            with self._dim_lock:
                if self._dim is None:
                    self._dim = len(vec)
                elif len(vec) != self._dim:
                    raise ProtocolError(
                        f"{self._url}: vector of length {len(vec)}, expected {self._dim}"
                    )
        return vectors

    def _vectors_for(self, normalized: list[str]) -> list[tuple[float, ...]]:
        keys = [self._key(n) for n in normalized]
        found: dict[str, tuple[float, ...] | None] = {}
        for key in keys:
            if key not in found:
                found[key] = self._cache.get(key)
        missing = [n for n, k in zip(normalized, keys) if found[k] is None]
        # dedupe while preserving order so the batch has one entry per text
        missing = list(dict.fromkeys(missing))
        if missing:
            fetched = self._post(missing)
            for text, vec in zip(missing, fetched):
                key = self._key(text)
                found[key] = self._cache.put(key, vec)
        return [found[k] for k in keys]

    def score(self, a: str, b: str) -> float:
        na, nb = _normalize(a), _normalize(b)
        if not na or not nb:
            return 0.0
        va, vb = self._vectors_for([na, nb])
        return _dense_cosine(va, vb)


def remote_provider(
    endpoint_url: str,
    cache: EmbeddingCache | None = None,
    timeout: float = 5.0,
    max_retries: int = 3,
) -> RemoteEmbeddingProvider:
    return RemoteEmbeddingProvider(
        endpoint_url, cache if cache is not None else EmbeddingCache(), timeout, max_retries
    )
