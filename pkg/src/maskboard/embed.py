"""Embedding providers behind one contract, with an on-disk response cache.

Providers return one float vector per input text; everything downstream
normalizes to unit length, so provider output scale never matters. The
deterministic local provider ("test") derives each vector from a content
hash, which keeps the whole test suite network-free and bit-stable. The
remote adapter speaks a JSON-over-HTTPS embeddings endpoint with the API
key taken from MASKBOARD_EMBED_KEY.
"""

from __future__ import annotations

import hashlib
import os
import time
from pathlib import Path

import numpy as np

from .errors import InvalidInput, ProviderUnavailable

EMBED_KEY_ENV = "MASKBOARD_EMBED_KEY"
EMBED_URL_ENV = "MASKBOARD_EMBED_URL"
DEFAULT_REMOTE_URL = "https://api.openai.com/v1/embeddings"
DEFAULT_REMOTE_MODEL = "text-embedding-3-large"
DEFAULT_REMOTE_DIM = 3072
DEFAULT_TEST_DIM = 64


class EmbeddingProvider:
    """Contract: embed_batch(texts) -> list of `dimension`-long vectors,
    identical text -> identical vector."""

    provider_id: str = ""
    dimension: int = 0

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic pseudo-random unit vectors seeded by content hash."""

    def __init__(self, dimension: int = DEFAULT_TEST_DIM):
        if dimension <= 0:
            raise InvalidInput("dimension must be > 0")
        self.dimension = dimension
        self.provider_id = f"test-{dimension}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            digest = hashlib.sha256(f"{self.provider_id}\x00{text}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            v = rng.standard_normal(self.dimension)
            out.append(v / np.linalg.norm(v))
        return out


class RemoteEmbeddingProvider(EmbeddingProvider):
    """JSON-over-HTTPS embeddings endpoint (OpenAI wire shape)."""

    def __init__(self, model: str = DEFAULT_REMOTE_MODEL, dimension: int = DEFAULT_REMOTE_DIM,
                 url: str | None = None, timeout: float = 60.0):
        self.model = model
        self.dimension = dimension
        self.url = url or os.environ.get(EMBED_URL_ENV, DEFAULT_REMOTE_URL)
        self.timeout = timeout
        self.provider_id = f"remote:{model}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        key = os.environ.get(EMBED_KEY_ENV)
        if not key:
            raise ProviderUnavailable(f"set {EMBED_KEY_ENV} to use the remote embedding provider")
        resp = requests.post(
            self.url,
            json={"model": self.model, "input": texts},
            headers={"Authorization": f"Bearer {key}"},
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise ProviderUnavailable(f"embeddings endpoint returned {resp.status_code}: {resp.text[:200]}")
        data = resp.json()["data"]
        vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in data]
        if len(vectors) != len(texts) or any(v.shape != (self.dimension,) for v in vectors):
            raise ProviderUnavailable("embeddings response shape does not match request")
        return vectors


def provider_from_spec(spec: str, dimension: int | None = None) -> EmbeddingProvider:
    """"test", "test-16", "remote", or "remote:<model>"."""
    if spec == "test":
        return HashEmbeddingProvider(dimension or DEFAULT_TEST_DIM)
    if spec.startswith("test-"):
        return HashEmbeddingProvider(int(spec.split("-", 1)[1]))
    if spec == "remote":
        return RemoteEmbeddingProvider(dimension=dimension or DEFAULT_REMOTE_DIM)
    if spec.startswith("remote:"):
        return RemoteEmbeddingProvider(model=spec.split(":", 1)[1], dimension=dimension or DEFAULT_REMOTE_DIM)
    raise InvalidInput(f"unknown provider spec {spec!r}")


class CachedEmbedder:
    """Wraps a provider with a per-text disk cache and retry/backoff.

    Cache entries are keyed by (provider_id, sha256(text)) and store the
    raw provider output, so repeat runs make zero provider calls and
    yield bit-identical vectors. On provider failure the batch is retried
    with exponential backoff; already-cached entries survive a fatal
    failure.
    """

    def __init__(self, provider: EmbeddingProvider, cache_dir: str | Path | None = None,
                 batch_size: int = 128, retries: int = 3, backoff: float = 0.2):
        self.provider = provider
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.batch_size = batch_size
        self.retries = retries
        self.backoff = backoff
        self.provider_calls = 0

    @property
    def provider_id(self) -> str:
        return self.provider.provider_id

    @property
    def dimension(self) -> int:
        return self.provider.dimension

    def _cache_path(self, text: str) -> Path | None:
        if self.cache_dir is None:
            return None
        safe = self.provider.provider_id.replace("/", "_").replace(":", "_")
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return self.cache_dir / safe / f"{digest}.npy"

    def _call_with_retry(self, batch: list[str]) -> list[np.ndarray]:
        delay = self.backoff
        for attempt in range(self.retries + 1):
            try:
                self.provider_calls += 1
                return self.provider.embed_batch(batch)
            except ProviderUnavailable:
                if attempt == self.retries:
                    raise
                time.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        results: list[np.ndarray | None] = [None] * len(texts)
        missing: list[int] = []
        for i, text in enumerate(texts):
            path = self._cache_path(text)
            if path is not None and path.exists():
                results[i] = np.load(path)
            else:
                missing.append(i)

        for start in range(0, len(missing), self.batch_size):
            chunk = missing[start : start + self.batch_size]
            vectors = self._call_with_retry([texts[i] for i in chunk])
            for i, vec in zip(chunk, vectors):
                vec = np.asarray(vec, dtype=np.float64)
                results[i] = vec
                path = self._cache_path(texts[i])
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    tmp = path.with_suffix(".tmp.npy")
                    np.save(tmp, vec)
                    os.replace(tmp, path)
        return [r for r in results]  # type: ignore[return-value]


def unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise InvalidInput("cannot normalize a zero vector")
    return v / norm
