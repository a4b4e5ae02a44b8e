"""Post ingestion, normalization and per-author aggregation."""

from __future__ import annotations

import json
import logging
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMATS = ("jsonl", "tsv")
SPLITS = ("whole", "half", "year")


class CorpusFormatError(ValueError):
    """Input file is mostly unparseable, or a corpus file is malformed."""


class EmptyAuthorError(ValueError):
    """An author has no usable posts."""


class DuplicateKeyError(ValueError):
    pass


@dataclass(frozen=True)
class RawPost:
    author_id: str
    timestamp: datetime
    text: str

    def __post_init__(self):
        if not self.author_id.strip():
            raise ValueError("author_id must be nonempty")

    @property
    def year(self) -> int:
        return self.timestamp.year


@dataclass(frozen=True)
class TokenizedPost:
    author_id: str
    year: int
    tokens: tuple[str, ...]


@dataclass
class AuthorDocument:
    key: str
    tokens: list[str]
    post_count: int


@dataclass(frozen=True)
class SplitPolicy:
    """How an author's posts become documents.

    ``whole`` gives one document per author, ``half`` two seeded random halves
    keyed ``<id>_A``/``<id>_B``, ``year`` one document per (author, year)
    keyed ``<id>_<year>``.
    """

    kind: str = "whole"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SPLITS:
            raise ValueError(f"unknown split policy {self.kind!r}; expected one of {SPLITS}")

    @classmethod
    def whole(cls) -> "SplitPolicy":
        return cls("whole")

    @classmethod
    def half(cls, seed: int) -> "SplitPolicy":
        return cls("half", seed)

    @classmethod
    def by_year(cls) -> "SplitPolicy":
        return cls("year")


def normalize_and_tokenize(text: str, drop_rt: bool = False) -> list[str]:
    """Lowercase, split on whitespace and drop ``@mention`` tokens.

    Everything else (URLs, hashtags, punctuation) is kept verbatim.
    With ``drop_rt`` the exact token ``rt`` is removed as well.
    """
    tokens = [tok for tok in text.lower().split() if not tok.startswith("@")]
    if drop_rt:
        tokens = [tok for tok in tokens if tok != "rt"]
    return tokens


def parse_timestamp(value: str) -> datetime:
    value = value.strip()
    if value.endswith(("Z", "z")):
        value = value[:-1] + "+00:00"
    ts = datetime.fromisoformat(value)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_jsonl_line(line: str) -> RawPost:
    obj = json.loads(line)
    author, ts, text = obj["author"], obj["ts"], obj["text"]
    if not isinstance(author, str) or not isinstance(ts, str) or not isinstance(text, str):
        raise TypeError("author, ts and text must be strings")
    return RawPost(author.strip(), parse_timestamp(ts), text)


def _parse_tsv_line(line: str) -> RawPost:
    parts = line.split("\t")
    if len(parts) != 3:
        raise ValueError(f"expected 3 tab-separated fields, got {len(parts)}")
    author, ts, text = parts
    return RawPost(author.strip(), parse_timestamp(ts), text)


def read_posts(path: str | Path, fmt: str) -> tuple[list[RawPost], int]:
    """Read raw posts from a JSONL or 3-column TSV file.

    Returns ``(posts, skipped)``. Malformed records are skipped and counted;
    if more than half of the nonblank records are malformed the file is
    rejected with :class:`CorpusFormatError`.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    parse = _parse_jsonl_line if fmt == "jsonl" else _parse_tsv_line
    posts: list[RawPost] = []
    skipped = 0
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                posts.append(parse(line))
            except (ValueError, KeyError, TypeError) as exc:
                skipped += 1
                logger.debug("%s:%d: skipping malformed record (%s)", path, lineno, exc)
    total = len(posts) + skipped
    if total and skipped * 2 > total:
        raise CorpusFormatError(f"{path}: {skipped} of {total} records are malformed")
    if skipped:
        logger.warning("%s: skipped %d malformed record(s)", path, skipped)
    return posts, skipped


def tokenize_posts(posts: Iterable[RawPost], drop_rt: bool = False) -> tuple[list[TokenizedPost], int]:
    """Tokenize raw posts; posts left with no tokens are dropped and counted."""
    out = []
    dropped = 0
    for post in posts:
        tokens = normalize_and_tokenize(post.text, drop_rt=drop_rt)
        if not tokens:
            dropped += 1
            continue
        out.append(TokenizedPost(post.author_id, post.year, tuple(tokens)))
    return out, dropped


def split_half(posts: Sequence[TokenizedPost], seed: int) -> tuple[list[TokenizedPost], list[TokenizedPost]]:
    """Seeded random halving: ``|A| = ceil(n/2)``, ``|B| = floor(n/2)``.

    Both halves keep the input order of their posts.
    """
    n = len(posts)
    if n == 0:
        raise EmptyAuthorError("cannot split an author with no posts")
    perm = np.random.default_rng(seed).permutation(n)
    cut = math.ceil(n / 2)
    in_a = np.zeros(n, dtype=bool)
    in_a[perm[:cut]] = True
    a = [p for p, flag in zip(posts, in_a) if flag]
    b = [p for p, flag in zip(posts, in_a) if not flag]
    return a, b


def author_seed(seed: int, author_id: str) -> int:
    """Per-author split seed derived from the corpus seed and the author id."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(author_id.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint64)[0])


def _document(key: str, posts: Sequence[TokenizedPost]) -> AuthorDocument:
    tokens: list[str] = []
    count = 0
    for p in posts:
        if p.tokens:
            tokens.extend(p.tokens)
            count += 1
    return AuthorDocument(key, tokens, count)


def aggregate(posts: Iterable[TokenizedPost], policy: SplitPolicy) -> tuple[list[AuthorDocument], int]:
    """Group posts into keyed author documents.

    Returns ``(documents, dropped)``. ``dropped`` counts authors (or
    author-years) whose document would be empty; under ``half`` an author
    with fewer than two usable posts is dropped whole. Documents are sorted
    by key.
    """
    by_author: dict[str, list[TokenizedPost]] = defaultdict(list)
    for p in posts:
        by_author[p.author_id].append(p)

    groups: list[list[tuple[str, list[TokenizedPost]]]] = []
    for author, plist in by_author.items():
        if policy.kind == "whole":
            groups.append([(author, plist)])
        elif policy.kind == "half":
            a, b = split_half(plist, author_seed(policy.seed, author))
            # both halves or neither
            groups.append([(f"{author}_A", a), (f"{author}_B", b)])
        else:
            by_year: dict[int, list[TokenizedPost]] = defaultdict(list)
            for p in plist:
                by_year[p.year].append(p)
            groups.extend([(f"{author}_{year}", by_year[year])] for year in sorted(by_year))

    docs: dict[str, AuthorDocument] = {}
    dropped = 0
    for group in groups:
        built = [_document(key, plist) for key, plist in group]
        if any(not d.tokens for d in built):
            dropped += 1
            continue
        for doc in built:
            if doc.key in docs:
                raise DuplicateKeyError(f"duplicate document key {doc.key!r}; author ids clash with split suffixes")
            docs[doc.key] = doc
    return [docs[k] for k in sorted(docs)], dropped


def write_corpus(path: str | Path, documents: Iterable[AuthorDocument]) -> int:
    """Write documents as JSONL (``key``, ``post_count``, ``tokens``)."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(json.dumps({"key": doc.key, "post_count": doc.post_count, "tokens": doc.tokens},
                                ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def read_corpus(path: str | Path) -> list[AuthorDocument]:
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = AuthorDocument(str(obj["key"]), [str(t) for t in obj["tokens"]], int(obj["post_count"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad corpus record ({exc})") from exc
            if doc.key in seen:
                raise DuplicateKeyError(f"{path}:{lineno}: duplicate key {doc.key!r}")
            seen.add(doc.key)
            docs.append(doc)
    return docs


def write_posts_tsv(path: str | Path, posts: Iterable[RawPost]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in posts:
            text = " ".join(p.text.split())
            fh.write(f"{p.author_id}\t{p.timestamp.strftime('%Y-%m-%dT%H:%M:%SZ')}\t{text}\n")
            n += 1
    return n


def write_posts_jsonl(path: str | Path, posts: Iterable[RawPost]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in posts:
            rec = {"author": p.author_id, "ts": p.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"), "text": p.text}
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n
