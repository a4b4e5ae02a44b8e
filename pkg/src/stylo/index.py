"""Exact cosine top-k search over unit-normalized author fingerprints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ZeroVectorError(ValueError):
    pass


class UnknownKeyError(KeyError):
    pass


@dataclass(frozen=True)
class AuthorFingerprint:
    key: str
    vector: np.ndarray


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVectorError("cosine is undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


class SimilarityIndex:
    """Immutable keyed set of unit vectors with brute-force cosine search.

    Rankings are by descending cosine, ties broken by ascending key.
    """

    def __init__(self, keys: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(keys):
            raise ValueError("need one row per key")
        if len(set(keys)) != len(keys):
            raise ValueError("keys must be unique")
        norms = np.linalg.norm(vectors, axis=1)
        zero = np.flatnonzero(norms == 0)
        if len(zero):
            raise ZeroVectorError(f"zero-norm vector for key {keys[zero[0]]!r}")
        if any(not k for k in keys):
            raise ValueError("keys must be nonempty")
        self.keys = list(keys)
        self.vectors = vectors / norms[:, None]
        self.vectors.setflags(write=False)
        self.row = {k: i for i, k in enumerate(self.keys)}
        # position of each key in lexicographic order, used as the tie-breaker
        self._key_rank = np.empty(len(keys), dtype=np.int64)
        self._key_rank[np.argsort(np.array(self.keys, dtype=object), kind="stable")] = np.arange(len(keys))

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self.row

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def fingerprint(self, key: str) -> AuthorFingerprint:
        return AuthorFingerprint(key, self.vectors[self._row(key)].copy())

    def _row(self, key: str) -> int:
        try:
            return self.row[key]
        except KeyError:
            raise UnknownKeyError(key) from None

    def _rows(self, keys: Iterable[str]) -> np.ndarray:
        return np.array([self._row(k) for k in keys], dtype=np.int64)

    def ranked(self, query: np.ndarray, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Candidate rows sorted best-first, with their cosine scores."""
        scores = np.clip(self.vectors[candidates] @ query, -1.0, 1.0)
        order = np.lexsort((self._key_rank[candidates], -scores))
        return candidates[order], scores[order]

    def candidate_rows(self, exclude: Iterable[str] = (), candidates: Iterable[str] | None = None) -> np.ndarray:
        rows = np.arange(len(self.keys)) if candidates is None else np.unique(self._rows(candidates))
        drop = self._rows(exclude)
        return rows[~np.isin(rows, drop)] if len(drop) else rows

    def query_vector(self, vector, k: int, exclude: Iterable[str] = (),
                     candidates: Iterable[str] | None = None) -> list[tuple[str, float]]:
        """Top ``k`` (key, cosine) for an arbitrary nonzero query vector."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(vector, dtype=np.float64)
        norm = np.linalg.norm(q)
        if norm == 0:
            raise ZeroVectorError("query vector is zero")
        rows, scores = self.ranked(q / norm, self.candidate_rows(exclude, candidates))
        return [(self.keys[r], float(s)) for r, s in zip(rows[:k], scores[:k])]

    def most_similar(self, query_key: str, k: int, candidates: Iterable[str] | None = None) -> list[tuple[str, float]]:
        """Top ``k`` neighbours of a stored key, never including the key itself."""
        q = self.vectors[self._row(query_key)]
        return self.query_vector(q, k, exclude=[query_key], candidates=candidates)

    def rank_of(self, query_key: str, target_key: str, candidates: Iterable[str] | None = None) -> int:
        """1-based rank of ``target_key`` among the neighbours of ``query_key``."""
        q = self.vectors[self._row(query_key)]
        rows, _ = self.ranked(q, self.candidate_rows([query_key], candidates))
        hit = np.flatnonzero(rows == self._row(target_key))
        if not len(hit):
            raise UnknownKeyError(f"{target_key!r} is not a candidate for {query_key!r}")
        return int(hit[0]) + 1

    def fingerprints(self) -> list[AuthorFingerprint]:
        return [AuthorFingerprint(k, self.vectors[i].copy()) for i, k in enumerate(self.keys)]


def build_index(model) -> SimilarityIndex:
    """Index of the model's document vectors."""
    return SimilarityIndex(model.doc_keys, model.w_doc)


def most_similar(index: SimilarityIndex, query_key: str, k: int) -> list[tuple[str, float]]:
    return index.most_similar(query_key, k)
