"""Batch audits: filename counts vs contents, and duplicate detection.

The pipeline is at-least-once, so duplicates are legal; these checks make
them visible instead of silent, and catch filename/count drift that would
corrupt the pagination index.
"""

from __future__ import annotations

import gzip
import json
from collections import Counter
from dataclasses import dataclass

from .objectstore import ObjectStore


@dataclass(frozen=True)
class CountMismatch:
    key: str
    claimed: int
    actual: int


def audit_counts(store: ObjectStore, event: str) -> list[CountMismatch]:
    """Files whose filename-encoded count disagrees with their contents."""
    from .objectstore import parse_batch_key

    mismatches = []
    for key in store.list(f"events/{event}/tweets-"):
        parsed = parse_batch_key(key)
        if parsed is None:
            continue
        claimed = parsed[3]
        body = gzip.decompress(store.get(key))
        actual = body.count(b"\n")
        if claimed != actual:
            mismatches.append(CountMismatch(key, claimed, actual))
    return mismatches


def find_duplicates(store: ObjectStore, event: str) -> dict[str, int]:
    """Tweet ids stored more than once, with their occurrence counts."""
    seen: Counter = Counter()
    for key in store.list(f"events/{event}/tweets-"):
        body = gzip.decompress(store.get(key)).decode("utf-8")
        for line in body.splitlines():
            try:
                doc = json.loads(line)
            except ValueError:
                continue
            tweet_id = doc.get("id_str")
            if tweet_id:
                seen[tweet_id] += 1
    return {tid: n for tid, n in seen.items() if n > 1}
