"""Pagination index derived from batch filenames alone.

Batch keys carry hour, sequence, and record count, so listing an event's
directory is enough to answer "which file holds record N", "which files
cover this time range", and "how many records per hour" without opening a
single object. The index is a plain immutable snapshot; services rebuild or
cache it as they see fit.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from datetime import datetime, timezone

from .objectstore import ObjectStore, parse_batch_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndexEntry:
    key: str
    hour: datetime
    seq: int
    count: int
    cum_start: int  # global offset of this file's first record


@dataclass(frozen=True)
class PageIndex:
    event: str
    entries: tuple[IndexEntry, ...]
    total: int
    built_at: datetime


def build_index(store: ObjectStore, event: str) -> PageIndex:
    """Index every parseable batch file under the event; skip the rest."""
    parsed = []
    for key in store.list(f"events/{event}/tweets-"):
        fields = parse_batch_key(key)
        if fields is None:
            logger.warning("skipping unparseable batch key: %s", key)
            continue
        _, hour, seq, count = fields
        parsed.append((hour, seq, count, key))
    parsed.sort(key=lambda t: (t[0], t[1]))

    entries = []
    cum = 0
    for hour, seq, count, key in parsed:
        entries.append(IndexEntry(key, hour, seq, count, cum))
        cum += count
    return PageIndex(
        event=event,
        entries=tuple(entries),
        total=cum,
        built_at=datetime.now(timezone.utc),
    )


def locate(index: PageIndex, page: int, page_size: int) -> list[tuple[str, int, int]]:
    """Minimal file spans covering the page: (key, first, stop) half-open.

    Global record order is file order; a page near a file boundary spans
    multiple files. Pages beyond the end come back empty.
    """
    if page_size < 1:
        raise ValueError("page_size must be >= 1")
    if page < 0:
        raise ValueError("page must be >= 0")
    lo = page * page_size
    hi = min(lo + page_size, index.total)
    if lo >= hi:
        return []

    starts = [e.cum_start for e in index.entries]
    i = bisect.bisect_right(starts, lo) - 1
    spans = []
    while i < len(index.entries) and index.entries[i].cum_start < hi:
        entry = index.entries[i]
        first = max(lo - entry.cum_start, 0)
        stop = min(hi - entry.cum_start, entry.count)
        if first < stop:
            spans.append((entry.key, first, stop))
        i += 1
    return spans


def slice_index(index: PageIndex, since: datetime | None = None,
                until: datetime | None = None) -> PageIndex:
    """Sub-index of entries with since <= hour <= until, offsets recomputed."""
    entries = []
    cum = 0
    for entry in index.entries:
        if since is not None and entry.hour < since:
            continue
        if until is not None and entry.hour > until:
            continue
        entries.append(IndexEntry(entry.key, entry.hour, entry.seq, entry.count, cum))
        cum += entry.count
    return PageIndex(
        event=index.event,
        entries=tuple(entries),
        total=cum,
        built_at=index.built_at,
    )


def histogram(index: PageIndex) -> dict[datetime, int]:
    """Records per hour bucket, straight off the filenames."""
    out: dict[datetime, int] = {}
    for entry in index.entries:
        out[entry.hour] = out.get(entry.hour, 0) + entry.count
    return out
