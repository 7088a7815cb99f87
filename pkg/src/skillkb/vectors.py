"""Embedding text, normalisation, cosine similarity and an embedding cache."""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroVector
from .gateway import EmbeddingGateway
from .skills import Skill, SkillLevel


def skill_embedding_text(skill: Skill) -> str:
    """Text that represents ``skill`` in vector space.

    Plans are keyed by the task they were distilled from; everything else by
    name and document. Content never participates.
    """
    if skill.level is SkillLevel.PLANNING:
        return skill.source_task_text
    return f"{skill.name}\n{skill.document}"


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ZeroVector("cannot normalise a zero vector")
    return v / n


def normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    n = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(n == 0.0):
        raise ZeroVector("cannot normalise a zero row")
    return m / n


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    # fsum is correctly rounded, so the result is exactly symmetric
    s = math.fsum((a * b).ravel())
    return min(1.0, max(-1.0, s))


def similarity_matrix(m: np.ndarray) -> np.ndarray:
    s = np.asarray(m, dtype=np.float64) @ np.asarray(m, dtype=np.float64).T
    s = (s + s.T) / 2.0
    return np.clip(s, -1.0, 1.0)


@dataclass(frozen=True)
class SkillEmbedding:
    skill_name: str
    vector: np.ndarray
    embedded_text_digest: str


class EmbeddingCache:
    """Embeddings keyed by the digest of the embedded text.

    Skills whose embedding text is unchanged never reach the gateway twice.
    """

    def __init__(self, embedder: EmbeddingGateway):
        self.embedder = embedder
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.gateway_calls = 0

    @property
    def dimension(self) -> int:
        return self.embedder.dimension

    def seed(self, entries: Sequence[SkillEmbedding]) -> None:
        with self._lock:
            for e in entries:
                self._vectors[e.embedded_text_digest] = normalize(e.vector)

    def _vectors_for(self, texts: Sequence[str]) -> list[np.ndarray]:
        digests = [text_digest(t) for t in texts]
        with self._lock:
            missing = sorted({d: t for d, t in zip(digests, texts) if d not in self._vectors}.items())
        if missing:
            rows = self.embedder.embed([t for _, t in missing])
            if rows.shape[1] != self.dimension:
                raise DimensionMismatch(f"embedder returned width {rows.shape[1]}")
            with self._lock:
                self.gateway_calls += 1
                for (d, _), row in zip(missing, rows):
                    self._vectors[d] = normalize(row)
        with self._lock:
            return [self._vectors[d] for d in digests]

    def for_skills(self, skills: Sequence[Skill]) -> list[SkillEmbedding]:
        texts = [skill_embedding_text(s) for s in skills]
        if not texts:
            return []
        vecs = self._vectors_for(texts)
        return [SkillEmbedding(s.name, v, text_digest(t)) for s, v, t in zip(skills, vecs, texts)]

    def matrix(self, skills: Sequence[Skill]) -> np.ndarray:
        embs = self.for_skills(skills)
        if not embs:
            return np.zeros((0, self.dimension))
        return np.vstack([e.vector for e in embs])

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack(self._vectors_for(list(texts)))
