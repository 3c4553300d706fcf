"""Text embeddings behind a small provider protocol.

``HashEmbedder`` is the offline default: signed character-trigram feature
hashing, L2-normalized. ``HttpEmbedder`` talks to a remote service. Both can
sit behind an ``EmbeddingCache`` keyed by (model_id, sha256(text)).
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

DEFAULT_MODEL_ID = "all-mpnet-base-v2"
HASH_MODEL_ID = "hash-trigram"


class EmbeddingError(RuntimeError):
    pass


class EmbeddingProvider(Protocol):
    model_id: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    c = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(-1.0, c))


def cosine_matrix(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine of ``query`` against every row of ``matrix``."""
    qn = np.linalg.norm(query)
    if qn == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cosine of a zero vector is undefined")
    return np.clip(matrix @ query / (norms * qn), -1.0, 1.0)


def _trigrams(text: str) -> list[str]:
    padded = f"  {text.lower()} "
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def hash_embed(text: str, dim: int = 256) -> np.ndarray:
    """Deterministic unit vector from signed trigram hashing.

    Each trigram adds a hash-derived weight in [1, 2) with a hash-derived sign
    to one bucket, so distinct trigrams cannot cancel exactly in practice.
    blake2b keeps the mapping identical across platforms and processes.
    """
    if dim < 8:
        raise ValueError("dim must be at least 8")
    if not text:
        raise ValueError("cannot embed empty text")
    vec = np.zeros(dim, dtype=np.float64)
    for gram in _trigrams(text):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=16).digest()
        bucket = int.from_bytes(digest[:8], "little") % dim
        raw = int.from_bytes(digest[8:], "little")
        sign = 1.0 if raw & 1 else -1.0
        weight = 1.0 + (raw >> 11) / float(1 << 53)
        vec[bucket] += sign * weight
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise EmbeddingError(f"degenerate hash embedding for {text!r}")
    return vec / norm


class HashEmbedder:
    def __init__(self, dim: int = 256):
        if dim < 8:
            raise ValueError("dim must be at least 8")
        self.dim = dim
        self.model_id = f"{HASH_MODEL_ID}-{dim}"
        self.requests = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.requests += 1
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([hash_embed(t, self.dim) for t in texts])


class HttpEmbedder:
    """Client for an embeddings endpoint speaking the common wire format.

    POST {endpoint}/embeddings with {"model": ..., "input": [...]}; expects
    {"data": [{"embedding": [...]}, ...]}.
    """

    def __init__(self, endpoint: str, model_id: str = DEFAULT_MODEL_ID, dim: int = 768,
                 api_key: str | None = None, client: httpx.Client | None = None, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model_id
        self.dim = dim
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = self._client.post(
                f"{self.endpoint}/embeddings",
                json={"model": self.model_id, "input": list(texts)},
                headers=self._headers,
            )
            resp.raise_for_status()
            rows = [item["embedding"] for item in resp.json()["data"]]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise EmbeddingError(f"embedding provider unreachable: {exc}") from exc
        mat = np.asarray(rows, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(texts):
            raise EmbeddingError("provider returned a malformed batch")
        if mat.shape[1] != self.dim:
            raise EmbeddingError(f"dim mismatch: expected {self.dim}, got {mat.shape[1]}")
        return mat


def content_key(model_id: str, text: str) -> str:
    return f"{model_id}:{hashlib.sha256(text.encode('utf-8')).hexdigest()}"


class EmbeddingCache:
    """In-memory cache with optional JSONL persistence.

    Reads are lock-free dictionary lookups; writes take a lock and append.
    """

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path else None
        self._rows: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._rows[rec["key"]] = np.asarray(rec["vector"], dtype=np.float64)

    def __len__(self) -> int:
        return len(self._rows)

    def get(self, key: str) -> np.ndarray | None:
        return self._rows.get(key)

    def put(self, key: str, vec: np.ndarray) -> None:
        with self._lock:
            if key in self._rows:
                return
            self._rows[key] = vec
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "vector": vec.tolist()}) + "\n")


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str], cache: EmbeddingCache | None = None) -> np.ndarray:
    """Embed a batch, calling the provider only for cache misses."""
    texts = list(texts)
    if cache is None:
        mat = np.asarray(provider.embed(texts), dtype=np.float64).reshape(len(texts), provider.dim)
        return mat
    keys = [content_key(provider.model_id, t) for t in texts]
    missing = sorted({k: t for k, t in zip(keys, texts) if cache.get(k) is None}.items())
    if missing:
        fresh = np.asarray(provider.embed([t for _, t in missing]), dtype=np.float64)
        if fresh.shape != (len(missing), provider.dim):
            raise EmbeddingError(f"dim mismatch in batch: got {fresh.shape}")
        for (k, _), row in zip(missing, fresh):
            cache.put(k, row)
    if not texts:
        return np.zeros((0, provider.dim))
    return np.stack([cache.get(k) for k in keys])


def make_provider(model_id: str = HASH_MODEL_ID, dim: int = 256, endpoint: str | None = None,
                  api_key: str | None = None) -> EmbeddingProvider:
    if endpoint:
        return HttpEmbedder(endpoint, model_id=model_id, dim=dim, api_key=api_key)
    return HashEmbedder(dim)
