"""Text embedding providers and a content-addressed embedding cache.

Embedding vectors are plain 1-D ``float64`` numpy arrays. They are never
normalized: the score network sees raw provider output.
"""
from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .core import PromptDomain

logger = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1


class EmbeddingError(RuntimeError):
    """Transport or provider failure; ``attempts`` records how many tries were made."""

    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class PrecomputeError(RuntimeError):
    def __init__(self, message, missing_descriptions, missing_instructions):
        super().__init__(message)
        self.missing_descriptions = list(missing_descriptions)
        self.missing_instructions = list(missing_instructions)


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class SyntheticEmbedder:
    """Deterministic hash embedder.

    The text's SHA-256 digest keys a Philox counter-based generator that
    emits ``dim`` values uniform in [-1, 1]. Distinct texts map to
    independent draws, so vectors are nearly orthogonal once ``dim >= 64``.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self.seed = int(seed)
        self.calls = 0

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        self.calls += 1
        digest = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
        key = int.from_bytes(digest[:16], "little")
        gen = np.random.Generator(np.random.Philox(key=key))
        return gen.uniform(-1.0, 1.0, self.dim)


class RemoteEmbedder:
    """Embeddings over an OpenAI-style ``POST {base_url}/embeddings`` endpoint.

    The credential is read from the environment variable named by
    ``api_key_env`` at call time. Failures are retried with exponential
    backoff.
    """

    def __init__(
        self,
        base_url: str,
        model: str = "text-embedding-3-large",
        dim: int = 3072,
        api_key_env: str = "OPENAI_API_KEY",
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        transport=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = int(dim)
        self.api_key_env = api_key_env
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._transport = transport

    def _client(self):
        import httpx

        return httpx.Client(timeout=self.timeout, transport=self._transport)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {"model": self.model, "input": text}
        last_exc = None
        for attempt in range(1, self.attempts + 1):
            try:
                with self._client() as client:
                    resp = client.post(f"{self.base_url}/embeddings", json=payload, headers=headers)
                    resp.raise_for_status()
                    values = resp.json()["data"][0]["embedding"]
                vec = np.asarray(values, dtype=np.float64)
                if vec.shape != (self.dim,):
                    raise EmbeddingError(f"provider returned dim {vec.shape}, expected {self.dim}", attempt)
                return vec
            except EmbeddingError:
                raise
            except Exception as exc:  # transport, HTTP status, malformed body
                last_exc = exc
                logger.warning("embedding attempt %d/%d failed: %s", attempt, self.attempts, exc)
                if attempt < self.attempts:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
        raise EmbeddingError(f"embedding failed after {self.attempts} attempts: {last_exc}", self.attempts)


def concat(a, b) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])


class EmbeddingCache:
    """Content-addressed store of embeddings, keyed by SHA-256 of the text.

    Persisted as ``.npz`` with a ``__version__`` entry and one array per hash.
    """

    def __init__(self, provider: Embedder | None = None):
        self.provider = provider
        self._store: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, text: str) -> bool:
        return text_hash(text) in self._store

    def get(self, text: str) -> np.ndarray:
        key = text_hash(text)
        vec = self._store.get(key)
        if vec is not None:
            self.hits += 1
            return vec
        if self.provider is None:
            raise KeyError(f"text not cached and no provider attached: {text[:40]!r}")
        vec = np.asarray(self.provider.embed(text), dtype=np.float64)
        vec.setflags(write=False)
        with self._lock:
            # another writer may have filled the slot; keep the first vector
            vec = self._store.setdefault(key, vec)
            self.misses += 1
        return vec

    def embed(self, text: str) -> np.ndarray:
        return self.get(text)

    @property
    def dim(self) -> int:
        if self.provider is not None:
            return self.provider.dim
        first = next(iter(self._store.values()), None)
        if first is None:
            raise ValueError("empty cache without provider has no dimension")
        return first.shape[0]

    def embed_many(self, texts: Iterable[str]) -> np.ndarray:
        return np.stack([self.get(t) for t in texts])

    def save(self, path) -> None:
        arrays = {f"h_{k}": v for k, v in sorted(self._store.items())}
        arrays["__version__"] = np.array(CACHE_FORMAT_VERSION)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, provider: Embedder | None = None) -> "EmbeddingCache":
        cache = cls(provider)
        with np.load(Path(path)) as data:
            version = int(data["__version__"]) if "__version__" in data.files else None
            if version != CACHE_FORMAT_VERSION:
                raise ValueError(f"unsupported embedding cache version {version!r}")
            for name in data.files:
                if name.startswith("h_"):
                    vec = np.array(data[name], dtype=np.float64)
                    vec.setflags(write=False)
                    cache._store[name[2:]] = vec
        return cache


def precompute_domain(domain: PromptDomain, provider: Embedder | None = None,
                      cache: EmbeddingCache | None = None) -> EmbeddingCache:
    """Embed every description and instruction of ``domain`` into ``cache``.

    Calling again on a filled cache makes no provider calls. On provider
    failure the partially-filled cache is kept and a :class:`PrecomputeError`
    lists the ids still missing, so the call can simply be retried.
    """
    if cache is None:
        cache = EmbeddingCache(provider)
    elif provider is not None:
        cache.provider = provider
    missing_d, missing_i = [], []
    error = None
    for items, missing in ((domain.descriptions, missing_d), (domain.instructions, missing_i)):
        for item in items:
            if error is None:
                try:
                    cache.get(item.text)
                    continue
                except Exception as exc:
                    error = exc
            if item.text not in cache:
                missing.append(item.id)
    if error is not None:
        raise PrecomputeError(f"precompute incomplete: {error}", missing_d, missing_i) from error
    return cache


def arm_features(domain: PromptDomain, cache: EmbeddingCache) -> np.ndarray:
    """Matrix of ``g(D_i) ⊕ g(I_i)`` rows for every arm, in arm-index order."""
    d = cache.embed_many(x.text for x in domain.descriptions)
    i = cache.embed_many(x.text for x in domain.instructions)
    k1, k2 = d.shape[0], i.shape[0]
    return np.concatenate([np.repeat(d, k2, axis=0), np.tile(i, (k1, 1))], axis=1)
