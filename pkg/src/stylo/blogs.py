"""Reader for the blog authorship corpus (one XML-ish file per blogger).

Files are named ``<id>.<gender>.<age>.<industry>.<sign>.xml`` and hold
``<date>DD,Month,YYYY</date>`` / ``<post>...</post>`` pairs. Many files are
not well-formed XML (bare ampersands, odd encodings), so they are scanned
with regular expressions instead of an XML parser.
"""

from __future__ import annotations

import re
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .corpus import RawPost

_PAIR = re.compile(r"<date>\s*(.*?)\s*</date>\s*<post>(.*?)</post>", re.S | re.I)
_MONTHS = {m: i for i, m in enumerate(
    ["january", "february", "march", "april", "may", "june", "july", "august", "september",
     "october", "november", "december"], start=1)}


def _parse_date(text: str) -> datetime | None:
    parts = text.split(",")
    if len(parts) != 3:
        return None
    day, month, year = (p.strip() for p in parts)
    m = _MONTHS.get(month.lower())
    if m is None or not day.isdigit() or not year.isdigit():
        return None
    try:
        return datetime(int(year), m, int(day), tzinfo=timezone.utc)
    except ValueError:
        return None


def read_blog_file(path: str | Path) -> tuple[list[RawPost], int]:
    """Posts of one blogger, and the number skipped for unreadable dates."""
    path = Path(path)
    author = path.name.split(".", 1)[0]
    raw = path.read_bytes().decode("utf-8", errors="replace")
    posts, skipped = [], 0
    for date, body in _PAIR.findall(raw):
        when = _parse_date(date)
        text = " ".join(body.split())
        if when is None or not text:
            skipped += 1
            continue
        posts.append(RawPost(author, when, text))
    return posts, skipped


def read_blog_corpus(directory: str | Path, max_authors: int | None = None,
                     seed: int = 0) -> tuple[list[RawPost], int]:
    """Posts from every ``*.xml`` file, optionally a seeded random subset of bloggers."""
    files = sorted(Path(directory).glob("*.xml"))
    if not files:
        raise FileNotFoundError(f"no .xml files under {directory}")
    if max_authors is not None and max_authors < len(files):
        pick = np.random.default_rng(seed).choice(len(files), size=max_authors, replace=False)
        files = [files[i] for i in sorted(pick)]
    posts, skipped = [], 0
    for f in files:
        p, s = read_blog_file(f)
        posts.extend(p)
        skipped += s
    return posts, skipped
