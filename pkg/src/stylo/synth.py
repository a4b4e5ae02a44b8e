"""Synthetic short-post corpora with controllable per-author style signal."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .corpus import RawPost


@dataclass
class SynthConfig:
    """Generator knobs.

    Every author draws tokens from a Zipfian background vocabulary shared by
    all authors, reweighted per author by lognormal noise (``style_sigma``),
    and with probability ``author_weight`` from a private Zipfian vocabulary
    of ``vocab_per_author`` words.
    """

    n_authors: int = 100
    posts_per_author: int | Sequence[int] = 1000
    vocab_shared: int = 2000
    vocab_per_author: int = 50
    zipf_s: float = 1.1
    author_weight: float = 0.3
    style_sigma: float = 0.5
    post_length: float = 15.0
    n_years: int = 1
    start_year: int = 2015
    mention_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_authors < 1:
            raise ValueError("n_authors must be >= 1")
        counts = self.post_counts()
        if len(counts) != self.n_authors or min(counts) < 1:
            raise ValueError("posts_per_author must be >= 1 (one value, or one per author)")
        if self.vocab_shared < 1 or self.vocab_per_author < 0:
            raise ValueError("vocab_shared must be >= 1 and vocab_per_author >= 0")
        if not 0.0 <= self.author_weight <= 1.0:
            raise ValueError("author_weight must be in [0, 1]")
        if self.vocab_per_author == 0 and self.author_weight > 0:
            self.author_weight = 0.0
        if self.n_years < 1 or self.post_length < 1:
            raise ValueError("n_years and post_length must be >= 1")

    def post_counts(self) -> list[int]:
        if isinstance(self.posts_per_author, int):
            return [self.posts_per_author] * self.n_authors
        return [int(c) for c in self.posts_per_author]


def _zipf(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** s
    return w / w.sum()


def synth_posts(cfg: SynthConfig) -> list[RawPost]:
    """Generate ``sum(post_counts)`` posts, grouped by author in time order."""
    rng = np.random.default_rng(cfg.seed)
    shared = np.array([f"w{i}" for i in range(cfg.vocab_shared)], dtype=object)
    background = _zipf(cfg.vocab_shared, cfg.zipf_s)
    private_p = _zipf(cfg.vocab_per_author, cfg.zipf_s) if cfg.vocab_per_author else None

    posts: list[RawPost] = []
    for a, n_posts in enumerate(cfg.post_counts()):
        author = f"u{a}"
        p = background * rng.lognormal(0.0, cfg.style_sigma, cfg.vocab_shared) if cfg.style_sigma > 0 else background
        p = p / p.sum()
        lengths = 1 + rng.poisson(cfg.post_length - 1, n_posts)
        total = int(lengths.sum())
        tokens = shared[rng.choice(cfg.vocab_shared, size=total, p=p)]
        if private_p is not None:
            own = rng.random(total) < cfg.author_weight
            n_own = int(own.sum())
            private = np.array([f"a{a}x{j}" for j in range(cfg.vocab_per_author)], dtype=object)
            tokens[own] = private[rng.choice(cfg.vocab_per_author, size=n_own, p=private_p)]
        years = rng.integers(0, cfg.n_years, n_posts)
        seconds = rng.integers(0, 365 * 86400, n_posts)
        stamps = sorted(datetime(cfg.start_year + int(y), 1, 1, tzinfo=timezone.utc) + timedelta(seconds=int(s))
                        for y, s in zip(years, seconds))
        mention = rng.random(n_posts) < cfg.mention_rate
        mention_to = rng.integers(0, cfg.n_authors, n_posts)
        capitalize = rng.random(n_posts) < 0.3
        start = 0
        for i, length in enumerate(lengths):
            words = list(tokens[start:start + length])
            start += length
            if capitalize[i]:
                words[0] = words[0].capitalize()
            if mention[i]:
                words.insert(0, f"@u{mention_to[i]}")
            posts.append(RawPost(author, stamps[i], " ".join(words)))
    return posts
