"""Vocabulary, frequent-word subsampling and the negative-sampling table."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .rng import next_double

NEGATIVE_POWER = 0.75


class EmptyVocabularyError(ValueError):
    pass


@dataclass
class Vocabulary:
    word_to_id: dict[str, int]
    id_to_word: list[str]
    counts: np.ndarray
    total_tokens: int
    min_count: int

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_id

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Word ids for ``tokens``; out-of-vocabulary tokens are dropped."""
        w2i = self.word_to_id
        return np.fromiter((w2i[t] for t in tokens if t in w2i), dtype=np.int32)

    @classmethod
    def from_counts(cls, counts: dict[str, int], min_count: int) -> "Vocabulary":
        """Vocabulary of words with count >= ``min_count``.

        Ids follow descending frequency, ties broken lexicographically.
        """
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        kept = sorted(((w, c) for w, c in counts.items() if c >= min_count), key=lambda wc: (-wc[1], wc[0]))
        if not kept:
            raise EmptyVocabularyError(f"no word reaches min_count={min_count}")
        words = [w for w, _ in kept]
        arr = np.array([c for _, c in kept], dtype=np.int64)
        return cls({w: i for i, w in enumerate(words)}, words, arr, int(arr.sum()), min_count)

    def to_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, count in zip(self.id_to_word, self.counts):
                fh.write(f"{word}\t{int(count)}\n")


def build_vocab(documents: Sequence, min_count: int = 5) -> Vocabulary:
    """Count tokens over all documents and keep words seen ``min_count`` times."""
    counts: Counter[str] = Counter()
    for doc in documents:
        counts.update(doc.tokens)
    return Vocabulary.from_counts(counts, min_count)


@dataclass(frozen=True)
class SubsamplePolicy:
    """Frequent-word downsampling threshold; ``None`` disables it."""

    threshold: float | None = 1e-3

    def __post_init__(self):
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("subsample threshold must be > 0 (or None to disable)")

    @property
    def enabled(self) -> bool:
        return self.threshold is not None


def keep_probability(word_id: int, vocab: Vocabulary, policy: SubsamplePolicy) -> float:
    """Probability of keeping one occurrence of ``word_id`` during training."""
    if not policy.enabled:
        return 1.0
    t = policy.threshold
    z = vocab.counts[word_id] / vocab.total_tokens
    if z <= t:
        return 1.0
    return min(1.0, (np.sqrt(z / t) + 1.0) * (t / z))


def keep_probabilities(vocab: Vocabulary, policy: SubsamplePolicy) -> np.ndarray:
    """Vectorized :func:`keep_probability` over the whole vocabulary."""
    if not policy.enabled:
        return np.ones(len(vocab), dtype=np.float64)
    t = policy.threshold
    z = vocab.counts.astype(np.float64) / vocab.total_tokens
    p = np.minimum(1.0, (np.sqrt(z / t) + 1.0) * (t / z))
    return np.where(z <= t, 1.0, p)


@dataclass(frozen=True)
class NegativeSamplingTable:
    """Cumulative ``count**0.75`` weights, sampled by binary search."""

    cumulative_weights: np.ndarray

    @classmethod
    def from_vocab(cls, vocab: Vocabulary, power: float = NEGATIVE_POWER) -> "NegativeSamplingTable":
        weights = vocab.counts.astype(np.float64) ** power
        return cls(np.cumsum(weights))

    def __len__(self) -> int:
        return len(self.cumulative_weights)

    @property
    def probabilities(self) -> np.ndarray:
        cw = self.cumulative_weights
        return np.diff(cw, prepend=0.0) / cw[-1]


@njit(cache=True, nogil=True)
def draw_negative(cumulative, exclude, state):
    """One id drawn proportionally to the table weights, never ``exclude``."""
    total = cumulative[-1]
    n = cumulative.shape[0]
    while True:
        x = next_double(state) * total
        # first index with cumulative[i] > x
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi) >> 1
            if cumulative[mid] > x:
                hi = mid
            else:
                lo = mid + 1
        if lo != exclude:
            return lo


@njit(cache=True, nogil=True)
def _draw_many(cumulative, k, exclude, state):
    out = np.empty(k, dtype=np.int64)
    for i in range(k):
        out[i] = draw_negative(cumulative, exclude, state)
    return out


def sample_negatives(table: NegativeSamplingTable, k: int, exclude: int, rng_state: np.ndarray) -> np.ndarray:
    """``k`` negative word ids (redrawing any hit on ``exclude``).

    Advances ``rng_state`` in place; the same starting state always yields
    the same ids. Pass ``exclude=-1`` to exclude nothing.
    """
    if len(table) < 2:
        raise ValueError("negative sampling needs a vocabulary of at least 2 words")
    if k < 1:
        raise ValueError("k must be >= 1")
    return _draw_many(table.cumulative_weights, int(k), int(exclude), rng_state)
