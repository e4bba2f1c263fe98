"""Embedding clients: deterministic hash embedder and HTTP adapter."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .types import GatewayError


@dataclass(frozen=True)
class QuestionEmbedding:
    """Fixed-length embedding vector; `unit_norm` marks pre-normalized output."""

    values: tuple[float, ...]
    unit_norm: bool = False

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


class Embedder(Protocol):
    model_id: str

    def embed(self, texts: Sequence[str]) -> list[QuestionEmbedding]: ...


class HashEmbedder:
    """Deterministic test embedder: hash-seeded pseudo-random unit vectors.

    Identical text always maps to the identical vector, across runs and
    platforms, which keeps offline pipelines reproducible.
    """

    def __init__(self, dim: int = 32, model_id: str | None = None) -> None:
        if dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.dim = dim
        self.model_id = model_id or f"hash:{dim}"

    def embed(self, texts: Sequence[str]) -> list[QuestionEmbedding]:
        out = []
        for text in texts:
            seed = int.from_bytes(
                hashlib.sha256(text.encode("utf-8")).digest()[:8], "big"
            )
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dim)
            vec = vec / np.linalg.norm(vec)
            out.append(QuestionEmbedding(tuple(float(v) for v in vec), unit_norm=True))
        return out


class HttpEmbedder:
    """Adapter for an embeddings endpoint shaped like POST /embeddings."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        headers: dict[str, str] | None = None,
        timeout: float = 60.0,
        session=None,
    ) -> None:
        if session is None:
            import requests

            session = requests.Session()
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.timeout = timeout
        self._session = session
        self._headers = {
            key: os.path.expandvars(value) for key, value in (headers or {}).items()
        }

    def embed(self, texts: Sequence[str]) -> list[QuestionEmbedding]:
        response = self._session.post(
            f"{self.base_url}/embeddings",
            json={"model": self.model_id, "input": list(texts)},
            headers=self._headers,
            timeout=self.timeout,
        )
        if response.status_code != 200:
            raise GatewayError(
                f"embedding backend returned {response.status_code}: "
                f"{response.text[:200]}"
            )
        payload = response.json()
        try:
            rows = sorted(payload["data"], key=lambda item: item["index"])
            return [
                QuestionEmbedding(tuple(float(v) for v in row["embedding"]))
                for row in rows
            ]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embedding payload: {exc}") from exc


def parse_embedder_id(model_id: str) -> Embedder | None:
    """Resolve built-in embedder ids; `hash:<dim>` is the offline embedder."""
    if model_id.startswith("hash:"):
        return HashEmbedder(dim=int(model_id.split(":", 1)[1]))
    if model_id == "hash":
        return HashEmbedder()
    return None
