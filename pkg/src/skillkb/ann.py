"""HNSW approximate nearest-neighbour index over unit vectors (inner product).

Layered proximity graph after Malkov & Yashunin (2018). Levels are drawn
from a seeded generator in insertion order, so a build is reproducible.
After a batch build the bottom layer is made fully reachable from the
entry point, which makes ``search`` exhaustive (hence exact) whenever the
index holds no more than ``ef_search`` vectors.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateName, EmptyIndex, FormatError, VersionError
from .vectors import SkillEmbedding

UNIT_TOL = 1e-6
_MAGIC = b"SKANN"
_FORMAT = 1


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2 or self.ef_construction < 1 or self.ef_search < 1:
            raise ValueError("invalid HNSW parameters")


def _score_rows(mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    # row-wise reduction, independent of which other rows are present
    return (mat * q).sum(axis=1)


def _rank(names: Sequence[str], sims: Iterable[float], k: int) -> list[tuple[str, float]]:
    pairs = sorted(zip(names, (float(s) for s in sims)), key=lambda p: (-p[1], p[0]))
    return [(n, min(1.0, max(-1.0, s))) for n, s in pairs[:k]]


def _check_query(query, dimension: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (dimension,):
        raise DimensionMismatch(f"query shape {q.shape}, index dimension {dimension}")
    if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
        raise ValueError("query must be unit-norm")
    return q


def brute_force_search(
    embeddings: Sequence[SkillEmbedding] | tuple[Sequence[str], np.ndarray], query, k: int
) -> list[tuple[str, float]]:
    """Exhaustive scan with the same ordering contract as ``AnnIndex.search``."""
    if k < 1:
        raise ValueError("k must be positive")
    if isinstance(embeddings, tuple):
        names, mat = embeddings
        mat = np.asarray(mat, dtype=np.float64)
    else:
        names = [e.skill_name for e in embeddings]
        mat = np.vstack([e.vector for e in embeddings]) if embeddings else np.zeros((0, 0))
    if len(names) == 0:
        raise EmptyIndex("nothing to search")
    q = _check_query(query, mat.shape[1])
    return _rank(list(names), _score_rows(mat, q), k)


class AnnIndex:
    def __init__(self, dimension: int, params: HnswParams | None = None):
        self.dimension = dimension
        self.params = params or HnswParams()
        self.names: list[str] = []
        self._ids: dict[str, int] = {}
        self._vecs = np.zeros((16, dimension), dtype=np.float64)
        self._levels: list[int] = []
        # _links[layer][node] -> neighbour ids
        self._links: list[dict[int, list[int]]] = []
        self._entry = -1
        self._rng = np.random.default_rng(self.params.seed)
        self._mult = 1.0 / math.log(self.params.M)

    # ------------------------------------------------------------ basics

    def __len__(self) -> int:
        return len(self.names)

    @property
    def vectors(self) -> np.ndarray:
        return self._vecs[: len(self.names)]

    @property
    def snapshot_id(self) -> str:
        h = hashlib.sha256()
        h.update("\x00".join(self.names).encode("utf-8"))
        h.update(np.ascontiguousarray(self.vectors).tobytes())
        h.update(repr(self.params).encode())
        return h.hexdigest()[:16]

    def _max_links(self, layer: int) -> int:
        return 2 * self.params.M if layer == 0 else self.params.M

    def _sim(self, q: np.ndarray, ids: Sequence[int]) -> np.ndarray:
        return self._vecs[list(ids)] @ q

    # ------------------------------------------------------------ graph search

    def _search_layer(self, q: np.ndarray, entry: Sequence[int], ef: int, layer: int) -> list[tuple[float, int]]:
        links = self._links[layer]
        visited = set(entry)
        sims = self._sim(q, entry)
        cand = [(-float(s), e) for s, e in zip(sims, entry)]
        heapq.heapify(cand)
        found = [(float(s), e) for s, e in zip(sims, entry)]
        heapq.heapify(found)
        while len(found) > ef:
            heapq.heappop(found)
        while cand:
            neg, c = heapq.heappop(cand)
            if -neg < found[0][0] and len(found) >= ef:
                break
            fresh = [n for n in links.get(c, ()) if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for s, n in zip(self._sim(q, fresh), fresh):
                s = float(s)
                if len(found) < ef or s > found[0][0]:
                    heapq.heappush(cand, (-s, n))
                    heapq.heappush(found, (s, n))
                    if len(found) > ef:
                        heapq.heappop(found)
        return sorted(found, key=lambda p: (-p[0], p[1]))

    def _select(self, q_id: int | None, q: np.ndarray, cands: list[tuple[float, int]], m: int) -> list[int]:
        """Diversity heuristic; pruned candidates back-fill up to ``m``."""
        kept: list[int] = []
        pruned: list[int] = []
        for s, c in cands:
            if c == q_id:
                continue
            if len(kept) >= m:
                break
            if kept and np.any(self._sim(self._vecs[c], kept) > s):
                pruned.append(c)
            else:
                kept.append(c)
        for c in pruned:
            if len(kept) >= m:
                break
            kept.append(c)
        return kept

    def _connect(self, node: int, neigh: list[int], layer: int) -> None:
        links = self._links[layer]
        links[node] = list(neigh)
        cap = self._max_links(layer)
        for n in neigh:
            lst = links.setdefault(n, [])
            if node in lst:
                continue
            lst.append(node)
            if len(lst) > cap:
                v = self._vecs[n]
                sims = self._sim(v, lst)
                order = sorted(zip((float(s) for s in sims), lst), key=lambda p: (-p[0], p[1]))
                links[n] = self._select(n, v, order, cap)

    # ------------------------------------------------------------ mutation

    def add(self, name: str, vector) -> None:
        if name in self._ids:
            raise DuplicateName(name)
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(f"vector shape {v.shape}, index dimension {self.dimension}")
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ValueError(f"vector for {name!r} is not unit-norm")
        node = len(self.names)
        if node == len(self._vecs):
            self._vecs = np.vstack([self._vecs, np.zeros_like(self._vecs)])
        self._vecs[node] = v
        self.names.append(name)
        self._ids[name] = node

        level = int(-math.log(1.0 - self._rng.random()) * self._mult)
        self._levels.append(level)
        while len(self._links) <= level:
            self._links.append({})
        for layer in range(level + 1):
            self._links[layer].setdefault(node, [])

        if self._entry < 0:
            self._entry = node
            return

        top = self._levels[self._entry]
        ep = [self._entry]
        for layer in range(top, level, -1):
            ep = [self._search_layer(v, ep, 1, layer)[0][1]]
        for layer in range(min(level, top), -1, -1):
            found = self._search_layer(v, ep, self.params.ef_construction, layer)
            neigh = self._select(node, v, found, self.params.M)
            self._connect(node, neigh, layer)
            ep = [c for _, c in found]
        if level > top:
            self._entry = node

    def ensure_reachable(self) -> int:
        """Link every bottom-layer node unreachable from the entry point.

        Returns the number of repair edges added.
        """
        if self._entry < 0:
            return 0
        links = self._links[0]
        added = 0
        while True:
            seen = {self._entry}
            stack = [self._entry]
            while stack:
                for n in links.get(stack.pop(), ()):
                    if n not in seen:
                        seen.add(n)
                        stack.append(n)
            lost = [i for i in range(len(self.names)) if i not in seen]
            if not lost:
                return added
            orphan = lost[0]
            reach = sorted(seen)
            best = reach[int(np.argmax(self._sim(self._vecs[orphan], reach)))]
            links[best].append(orphan)
            links[orphan].append(best)
            added += 1

    # ------------------------------------------------------------ queries

    def search(self, query, k: int) -> list[tuple[str, float]]:
        """Top-``k`` (name, similarity), similarity desc then name asc."""
        if not self.names:
            raise EmptyIndex("index is empty")
        if k < 1:
            raise ValueError("k must be positive")
        q = _check_query(query, self.dimension)
        ep = [self._entry]
        for layer in range(self._levels[self._entry], 0, -1):
            ep = [self._search_layer(q, ep, 1, layer)[0][1]]
        found = self._search_layer(q, ep, max(self.params.ef_search, k), 0)
        ids = [c for _, c in found]
        return _rank([self.names[i] for i in ids], _score_rows(self._vecs[ids], q), k)

    def vector(self, name: str) -> np.ndarray:
        return self._vecs[self._ids[name]]

    # ------------------------------------------------------------ disk cache

    def save(self, path: str | Path, key: str = "") -> None:
        header = {
            "format": _FORMAT,
            "key": key,
            "dimension": self.dimension,
            "params": [self.params.M, self.params.ef_construction, self.params.ef_search, self.params.seed],
            "names": self.names,
            "levels": self._levels,
            "entry": self._entry,
            "links": [{str(k): v for k, v in sorted(layer.items())} for layer in self._links],
        }
        hb = json.dumps(header, sort_keys=True).encode("utf-8")
        body = np.ascontiguousarray(self.vectors, dtype="<f8").tobytes()
        Path(path).write_bytes(_MAGIC + struct.pack("<II", _FORMAT, len(hb)) + hb + body)

    @classmethod
    def load(cls, path: str | Path, key: str | None = None) -> "AnnIndex":
        raw = Path(path).read_bytes()
        if raw[:5] != _MAGIC:
            raise FormatError("not an index cache file")
        fmt, hlen = struct.unpack("<II", raw[5:13])
        if fmt != _FORMAT:
            raise VersionError(f"index cache format {fmt}")
        header = json.loads(raw[13 : 13 + hlen])
        if key is not None and header["key"] != key:
            raise VersionError("index cache key mismatch")
        m, efc, efs, seed = header["params"]
        idx = cls(header["dimension"], HnswParams(m, efc, efs, seed))
        n = len(header["names"])
        vecs = np.frombuffer(raw[13 + hlen :], dtype="<f8").reshape(n, header["dimension"]).copy()
        idx._vecs = vecs if n else idx._vecs
        idx.names = list(header["names"])
        idx._ids = {nm: i for i, nm in enumerate(idx.names)}
        idx._levels = list(header["levels"])
        idx._entry = header["entry"]
        idx._links = [{int(k): list(v) for k, v in layer.items()} for layer in header["links"]]
        return idx


def build_index(
    embeddings: Sequence[SkillEmbedding] | tuple[Sequence[str], np.ndarray],
    params: HnswParams | None = None,
) -> AnnIndex:
    if isinstance(embeddings, tuple):
        names, mat = embeddings
        rows = list(zip(names, np.asarray(mat, dtype=np.float64)))
    else:
        rows = [(e.skill_name, e.vector) for e in embeddings]
    if not rows:
        raise ValueError("build_index needs at least one embedding")
    dim = len(rows[0][1])
    idx = AnnIndex(dim, params)
    for name, vec in rows:
        if len(vec) != dim:
            raise DimensionMismatch(f"{name!r} has dimension {len(vec)}, expected {dim}")
        idx.add(name, vec)
    idx.ensure_reachable()
    return idx
