from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_skill, unit_rows
from oracles import knn_oracle
from skillkb.ann import AnnIndex, HnswParams, brute_force_search, build_index
from skillkb.errors import DimensionMismatch, DuplicateName, EmptyIndex, FormatError, VersionError, ZeroVector
from skillkb.gateway import HashEmbedder
from skillkb.vectors import (
    EmbeddingCache,
    SkillEmbedding,
    cosine_similarity,
    normalize,
    normalize_rows,
    similarity_matrix,
    skill_embedding_text,
)


# ---------------------------------------------------------------- vectors


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_cosine_matches_euclidean_identity(seed, dim):
    a, b = unit_rows(np.random.default_rng(seed), 2, dim)
    assert abs(cosine_similarity(a, b) - (1 - 0.5 * np.sum((a - b) ** 2))) <= 1e-9


def test_cosine_is_exactly_symmetric_and_clipped():
    rng = np.random.default_rng(0)
    for a, b in zip(unit_rows(rng, 50, 7), unit_rows(rng, 50, 7)):
        assert cosine_similarity(a, b) == cosine_similarity(b, a)
    assert cosine_similarity([1.0, 0.0], [1.0 + 1e-12, 0.0]) == 1.0
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1.0], [1.0, 0.0])


def test_normalize_errors():
    with pytest.raises(ZeroVector):
        normalize([0.0, 0.0])
    with pytest.raises(ZeroVector):
        normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert np.allclose(normalize([3.0, 4.0]), [0.6, 0.8])


def test_similarity_matrix_symmetric():
    m = unit_rows(np.random.default_rng(1), 30, 5)
    s = similarity_matrix(m)
    assert np.array_equal(s, s.T)
    assert s.max() <= 1.0 and s.min() >= -1.0


def test_embedding_text_excludes_content():
    s = make_skill("x")
    assert skill_embedding_text(s) == f"x\n{s.document}"
    assert skill_embedding_text(s.with_(content="other")) == skill_embedding_text(s)
    plan = make_skill("p", "planning")
    assert skill_embedding_text(plan) == plan.source_task_text


class _Counting(HashEmbedder):
    def __init__(self):
        super().__init__(32)
        self.batches = []

    def embed(self, texts):
        self.batches.append(list(texts))
        return super().embed(texts)


def test_embedding_cache_reuses_vectors():
    emb = _Counting()
    cache = EmbeddingCache(emb)
    skills = [make_skill("a"), make_skill("b")]
    first = cache.for_skills(skills)
    again = cache.for_skills(skills)
    assert len(emb.batches) == 1
    assert all(np.array_equal(x.vector, y.vector) for x, y in zip(first, again))
    cache.for_skills([skills[0].with_(document="changed")])
    assert len(emb.batches) == 2 and len(emb.batches[1]) == 1
    fresh = EmbeddingCache(_Counting())
    fresh.seed(first)
    fresh.for_skills(skills)
    assert fresh.gateway_calls == 0


# ---------------------------------------------------------------- ann


def test_index_contracts():
    idx = AnnIndex(4)
    with pytest.raises(EmptyIndex):
        idx.search([1.0, 0, 0, 0], 1)
    idx.add("a", [1.0, 0, 0, 0])
    with pytest.raises(DuplicateName):
        idx.add("a", [0, 1.0, 0, 0])
    with pytest.raises(ValueError):
        idx.add("b", [2.0, 0, 0, 0])
    with pytest.raises(DimensionMismatch):
        idx.add("c", [1.0, 0])
    with pytest.raises(ValueError):
        idx.search([1.0, 0, 0, 0], 0)
    with pytest.raises(DimensionMismatch):
        idx.search([1.0, 0], 1)
    with pytest.raises(ValueError):
        HnswParams(M=1)
    with pytest.raises(EmptyIndex):
        brute_force_search([], [1.0], 1)


def test_ties_break_by_name():
    v = np.array([1.0, 0.0])
    idx = build_index((["b", "a", "c"], np.vstack([v, v, v])))
    assert [n for n, _ in idx.search(v, 3)] == ["a", "b", "c"]


def test_build_is_reproducible():
    data = unit_rows(np.random.default_rng(7), 300, 16)
    names = [f"n{i}" for i in range(300)]
    a, b = build_index((names, data)), build_index((names, data))
    assert a.snapshot_id == b.snapshot_id
    q = data[5]
    assert a.search(q, 10) == b.search(q, 10)
    assert a.search(q, 1)[0][0] == "n5"


def test_save_load_roundtrip(tmp_path):
    data = unit_rows(np.random.default_rng(8), 50, 8)
    names = [f"n{i}" for i in range(50)]
    idx = build_index((names, data))
    p = tmp_path / "i.bin"
    idx.save(p, key="k1")
    back = AnnIndex.load(p, key="k1")
    assert back.snapshot_id == idx.snapshot_id
    assert back.search(data[3], 5) == idx.search(data[3], 5)
    with pytest.raises(VersionError):
        AnnIndex.load(p, key="other")
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(FormatError):
        AnnIndex.load(tmp_path / "bad.bin")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 128), st.integers(1, 12))
def test_small_indexes_are_exact(seed, n, k):
    rng = np.random.default_rng(seed)
    data = unit_rows(rng, n, 12)
    names = [f"v{i:03d}" for i in range(n)]
    q = unit_rows(rng, 1, 12)[0]
    got = [name for name, _ in build_index((names, data)).search(q, k)]
    assert got == knn_oracle(names, data.tolist(), q.tolist(), k)


def test_embeddings_input_form():
    embs = [SkillEmbedding(f"s{i}", v, "d") for i, v in enumerate(unit_rows(np.random.default_rng(9), 5, 4))]
    idx = build_index(embs)
    assert len(idx) == 5
    assert brute_force_search(embs, embs[2].vector, 1)[0][0] == "s2"
