"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package's algorithms; only plain Python and math.
"""

from __future__ import annotations

import math
from collections import deque


def dot(a, b) -> float:
    return math.fsum(float(x) * float(y) for x, y in zip(a, b))


def mmr_oracle(items, lam: float, cap: int) -> list[str]:
    """Greedy MMR by exhaustive rescoring every round.

    ``items`` are ``(name, relevance, vector)``. Redundancy is the largest
    similarity to anything already picked (0 before the first pick). Ties
    go to the smaller name.
    """
    remaining = list(items)
    picked: list[tuple] = []
    while remaining and len(picked) < cap:
        best = None
        for it in remaining:
            red = max((dot(it[2], p[2]) for p in picked), default=0.0)
            score = lam * it[1] - (1.0 - lam) * red
            if best is None or score > best[0] or (score == best[0] and it[0] < best[1][0]):
                best = (score, it)
        picked.append(best[1])
        remaining.remove(best[1])
    return [p[0] for p in picked]


def dbscan_oracle(vectors, eps: float, min_samples: int) -> list[int]:
    """Textbook sequential DBSCAN on cosine distance; -1 is noise.

    Points are visited in index order, clusters grow breadth first, and a
    border point stays with the first cluster that reaches it.
    """
    n = len(vectors)
    dist = [[1.0 - dot(vectors[i], vectors[j]) for j in range(n)] for i in range(n)]
    neigh = [[j for j in range(n) if dist[i][j] <= eps or i == j] for i in range(n)]
    labels = [None] * n
    cluster = -1
    for i in range(n):
        if labels[i] is not None:
            continue
        if len(neigh[i]) < min_samples:
            labels[i] = -1
            continue
        cluster += 1
        labels[i] = cluster
        queue = deque(neigh[i])
        while queue:
            j = queue.popleft()
            if labels[j] == -1:
                labels[j] = cluster  # noise becomes border
            if labels[j] is not None:
                continue
            labels[j] = cluster
            if len(neigh[j]) >= min_samples:
                queue.extend(neigh[j])
    return labels


def cap_cluster(vectors, members: list[int], cap: int) -> tuple[set[int], set[int]]:
    """Keep the ``cap`` members most similar to the medoid (max summed similarity)."""
    sums = [math.fsum(dot(vectors[i], vectors[j]) for j in members) for i in members]
    medoid = members[max(range(len(members)), key=lambda p: (sums[p], -p))]
    order = sorted(members, key=lambda i: (-dot(vectors[medoid], vectors[i]), i))
    return set(order[:cap]), set(order[cap:])


def knn_oracle(names, vectors, query, k: int) -> list[str]:
    scored = sorted(((-dot(v, query), n) for n, v in zip(names, vectors)))
    return [n for _, n in scored[:k]]
