"""Spherical k-means over author fingerprints ("sociolect" groups)."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .index import SimilarityIndex


@dataclass
class Clustering:
    k: int
    assignments: dict[str, int]
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)

    def sizes(self) -> list[int]:
        counts = Counter(self.assignments.values())
        return [counts.get(c, 0) for c in range(self.k)]

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.assignments):
                fh.write(f"{key}\t{self.assignments[key]}\n")


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # for unit vectors the squared euclidean distance is 2 * (1 - cos)
    n = len(x)
    chosen = [int(rng.integers(n))]
    best = x @ x[chosen[0]]
    for _ in range(1, k):
        weight = np.clip(1.0 - best, 0.0, None)
        weight[chosen] = 0.0
        total = weight.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=weight / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        best = np.maximum(best, x @ x[nxt])
    return x[chosen].copy()


def kmeans(index: SimilarityIndex, k: int, seed: int = 0, max_iters: int = 100) -> Clustering:
    """Spherical k-means with k-means++ seeding.

    Points go to the centroid of highest cosine; a centroid is the
    normalized mean of its members. An empty cluster takes over the point
    farthest from its current centroid. Stops when no assignment changes or
    after ``max_iters`` iterations. ``inertia`` is the summed ``1 - cos``.
    """
    n = len(index)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = index.vectors
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for it in range(max_iters):
        iterations = it + 1
        sims = x @ centroids.T
        new = np.argmax(sims, axis=1)
        own = sims[np.arange(n), new]
        sizes = np.bincount(new, minlength=k)
        for c in np.flatnonzero(sizes == 0):
            movable = sizes[new] > 1
            far = int(np.flatnonzero(movable)[np.argmin(own[movable])])
            sizes[new[far]] -= 1
            new[far] = c
            sizes[c] = 1
            own[far] = 1.0
        changed = not np.array_equal(new, assign)
        assign = new
        for c in range(k):
            mean = x[assign == c].sum(axis=0)
            norm = np.linalg.norm(mean)
            centroids[c] = mean / norm if norm > 0 else x[assign == c][0]
        history.append(float(np.sum(1.0 - np.einsum("ij,ij->i", x, centroids[assign]))))
        if not changed:
            break
    inertia = max(0.0, history[-1])
    return Clustering(k, {key: int(assign[i]) for i, key in enumerate(index.keys)}, centroids,
                      inertia, iterations, history)


@dataclass
class ClusterSummary:
    cluster: int
    size: int
    medoid: str
    top_tokens: list[tuple[str, float]]


def cluster_report(clustering: Clustering, index: SimilarityIndex, documents: Sequence,
                   top_n: int = 10, min_global_count: int = 10) -> list[ClusterSummary]:
    """Per-cluster size, medoid and most over-represented tokens.

    A token's score is its in-cluster relative frequency divided by its
    global relative frequency; tokens seen fewer than ``min_global_count``
    times overall are ignored.
    """
    by_key = {d.key: d for d in documents}
    global_counts: Counter[str] = Counter()
    cluster_counts = [Counter() for _ in range(clustering.k)]
    for key, c in clustering.assignments.items():
        doc = by_key.get(key)
        if doc is None:
            continue
        global_counts.update(doc.tokens)
        cluster_counts[c].update(doc.tokens)
    global_total = sum(global_counts.values()) or 1

    rows = []
    for c in range(clustering.k):
        members = sorted(k for k, a in clustering.assignments.items() if a == c)
        if not members:
            rows.append(ClusterSummary(c, 0, "", []))
            continue
        v = index.vectors[[index.row[m] for m in members]]
        medoid = members[int(np.argmax((v @ v.T).sum(axis=1)))]
        local = cluster_counts[c]
        local_total = sum(local.values()) or 1
        scored = [(tok, (cnt / local_total) / (global_counts[tok] / global_total))
                  for tok, cnt in local.items() if global_counts[tok] >= min_global_count]
        scored.sort(key=lambda ts: (-ts[1], ts[0]))
        rows.append(ClusterSummary(c, len(members), medoid, scored[:top_n]))
    return rows


def write_cluster_report(rows: Sequence[ClusterSummary], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(r) for r in rows], fh, indent=2, ensure_ascii=False)
        fh.write("\n")
