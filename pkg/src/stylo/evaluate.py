"""Identification protocols: split-half retrieval, top-k, sweeps, activity and temporal."""

from __future__ import annotations

import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .index import SimilarityIndex, build_index
from .pvdm import TrainConfig, train

logger = logging.getLogger(__name__)


class UnpairedKeyError(ValueError):
    pass


class NoTemporalQueriesError(ValueError):
    pass


@dataclass
class AuthorOutcome:
    query: str
    matched: str | None
    true_key: str
    rank: int | None
    positive: bool
    post_count: int | None = None


@dataclass
class EvalReport:
    protocol: str
    k: int
    n_authors: int
    accuracy: float
    outcomes: list[AuthorOutcome]
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def positives(self) -> int:
        return sum(o.positive for o in self.outcomes)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, ensure_ascii=False)
            fh.write("\n")

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("protocol\tk\tn_authors\tpositives\taccuracy\n")
            fh.write(f"{self.protocol}\t{self.k}\t{self.n_authors}\t{self.positives}\t{self.accuracy:.6f}\n")


def _finish(protocol: str, k: int, outcomes: list[AuthorOutcome], config, start: float) -> EvalReport:
    outcomes.sort(key=lambda o: o.query)
    n = len(outcomes)
    acc = sum(o.positive for o in outcomes) / n if n else 0.0
    return EvalReport(protocol, k, n, acc, outcomes, dict(config or {}), time.perf_counter() - start)


def author_post_counts(documents: Sequence) -> dict[str, int]:
    """Post counts keyed by document key."""
    return {d.key: d.post_count for d in documents}


def split_half_pairs(keys: Sequence[str]) -> list[str]:
    """Author ids that have both an ``_A`` and a ``_B`` document.

    Raises :class:`UnpairedKeyError` if any half lacks its partner.
    """
    a_ids = {k[:-2] for k in keys if k.endswith("_A")}
    b_ids = {k[:-2] for k in keys if k.endswith("_B")}
    orphans = sorted([f"{i}_A" for i in a_ids - b_ids] + [f"{i}_B" for i in b_ids - a_ids])
    if orphans:
        raise UnpairedKeyError("unpaired split-half keys: " + ", ".join(orphans))
    ids = sorted(a_ids)
    if not ids:
        raise UnpairedKeyError("index holds no _A/_B key pairs")
    return ids


def split_half_eval(index: SimilarityIndex, k: int = 1, post_counts: dict[str, int] | None = None,
                    config: dict | None = None) -> EvalReport:
    """Query every ``<id>_A`` against all other fingerprints.

    Positive when ``<id>_B`` ranks within the top ``k``. ``post_counts`` (by
    document key) lets the report carry each author's total post count.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    start = time.perf_counter()
    outcomes = []
    for author in split_half_pairs(index.keys):
        qa, qb = f"{author}_A", f"{author}_B"
        top = index.most_similar(qa, 1)
        rank = index.rank_of(qa, qb)
        count = None
        if post_counts is not None and qa in post_counts and qb in post_counts:
            count = post_counts[qa] + post_counts[qb]
        outcomes.append(AuthorOutcome(qa, top[0][0] if top else None, qb, rank, rank <= k, count))
    return _finish("split-half", k, outcomes, config, start)


def topk_curve(index: SimilarityIndex, ks: Sequence[int]) -> dict[int, float]:
    """Split-half accuracy for each k, from a single ranking pass."""
    ranks = [o.rank for o in split_half_eval(index, 1).outcomes]
    return {k: sum(r <= k for r in ranks) / len(ranks) for k in ks}


@dataclass
class SweepPoint:
    dim: int
    report: EvalReport | None
    error: str | None = None

    @property
    def accuracy(self) -> float | None:
        return None if self.report is None else self.report.accuracy


def dimension_sweep(documents: Sequence, dims: Sequence[int], base: TrainConfig, k: int = 1) -> list[SweepPoint]:
    """Train and evaluate one model per dimensionality.

    Everything but ``dim`` is taken from ``base``. A failure at one ``dim`` is
    recorded on its point and the sweep continues.
    """
    if not dims:
        raise ValueError("dims must be nonempty")
    counts = author_post_counts(documents)
    points = []
    for d in dims:
        try:
            cfg = replace(base, dim=int(d))
            model = train(documents, cfg)
            report = split_half_eval(build_index(model), k, counts, config=cfg.to_dict())
            points.append(SweepPoint(int(d), report))
            logger.info("D=%d: accuracy %.4f", d, report.accuracy)
        except Exception as exc:  # noqa: BLE001 - one bad D must not end the sweep
            logger.error("D=%s failed: %s", d, exc)
            points.append(SweepPoint(int(d), None, f"{type(exc).__name__}: {exc}"))
    return points


def write_sweep_tsv(points: Sequence[SweepPoint], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("D\taccuracy\n")
        for p in points:
            fh.write(f"{p.dim}\t{'nan' if p.accuracy is None else format(p.accuracy, '.6f')}\n")


@dataclass
class ActivityRow:
    min_posts: int
    n_authors: int
    accuracy: float | None
    n_below: int
    accuracy_below: float | None


def activity_breakdown(report: EvalReport, documents: Sequence | None, thresholds: Sequence[int]) -> list[ActivityRow]:
    """Accuracy over authors with at least ``min_posts`` posts, per threshold.

    Each row also carries the complementary subset (fewer posts). Empty
    subsets have ``accuracy=None``. Post counts come from ``documents`` when
    given, otherwise from the report.
    """
    counts = author_post_counts(documents) if documents is not None else None

    def post_count(o: AuthorOutcome) -> int:
        if counts is None:
            if o.post_count is None:
                raise ValueError(f"no post count for {o.query}; pass the corpus")
            return o.post_count
        return counts[o.query] + (counts[o.true_key] if report.protocol == "split-half" else 0)

    per_author = [(post_count(o), o.positive) for o in report.outcomes]
    rows = []
    for t in thresholds:
        above = [pos for c, pos in per_author if c >= t]
        below = [pos for c, pos in per_author if c < t]
        rows.append(ActivityRow(
            int(t), len(above), sum(above) / len(above) if above else None,
            len(below), sum(below) / len(below) if below else None))
    return rows


def write_activity_tsv(rows: Sequence[ActivityRow], path: str | Path) -> None:
    def fmt(x):
        return "undefined" if x is None else f"{x:.6f}"

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("min_posts\tn_authors\taccuracy\tn_below\taccuracy_below\n")
        for r in rows:
            fh.write(f"{r.min_posts}\t{r.n_authors}\t{fmt(r.accuracy)}\t{r.n_below}\t{fmt(r.accuracy_below)}\n")


def parse_year_key(key: str) -> tuple[str, int]:
    author, sep, year = key.rpartition("_")
    if not sep or not author or not year.isdigit():
        raise ValueError(f"key {key!r} is not of the form <author>_<year>")
    return author, int(year)


def temporal_pools(keys: Sequence[str]) -> dict[str, list[str]]:
    """Candidate pool for each (author, year) query that has an earlier year.

    A pool holds every key, from any author, with a strictly earlier year.
    """
    parsed = {k: parse_year_key(k) for k in keys}
    years_of: dict[str, set[int]] = defaultdict(set)
    for author, year in parsed.values():
        years_of[author].add(year)
    pools = {}
    for key, (author, year) in parsed.items():
        if any(y < year for y in years_of[author]):
            pools[key] = sorted(k for k, (_, y) in parsed.items() if y < year)
    return pools


def temporal_eval(index: SimilarityIndex, post_counts: dict[str, int] | None = None,
                  config: dict | None = None) -> EvalReport:
    """Match each (author, year) against all documents from earlier years.

    Positive when the nearest earlier document belongs to the same author.
    Accuracy is micro-averaged over queries.
    """
    start = time.perf_counter()
    pools = temporal_pools(index.keys)
    if not pools:
        raise NoTemporalQueriesError("no author has documents in two or more years")
    outcomes = []
    for key, pool in pools.items():
        author, _ = parse_year_key(key)
        ranked = index.most_similar(key, len(pool), candidates=pool)
        rank = next(i for i, (k, _) in enumerate(ranked, start=1) if parse_year_key(k)[0] == author)
        best_own = ranked[rank - 1][0]
        count = post_counts.get(key) if post_counts else None
        outcomes.append(AuthorOutcome(key, ranked[0][0], best_own, rank, rank == 1, count))
    return _finish("temporal", 1, outcomes, config, start)
