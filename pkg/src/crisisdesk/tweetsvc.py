"""Tweets API: paginated browsing over stored batches via the cached index.

The service is read-only and deliberately knows nothing about the events
service: the event name is just a path prefix in the object store. A page
request costs one cached index lookup plus decompression of only the files
the page actually touches; the index itself is rebuilt from a listing at
most once per TTL (default 10 minutes) per event.

Timestamps in ``since``/``until`` are hour buckets in ``YYYYMMDDHH`` form,
matching the hour encoded in batch filenames.
"""

from __future__ import annotations

import gzip
import json
import threading
import time
from collections import defaultdict
from datetime import datetime
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response

from .eventindex import PageIndex, build_index, histogram, locate, slice_index
from .objectstore import ObjectStore, hour_to_str, str_to_hour

INDEX_TTL = 600.0  # seconds a cached index stays hot


class IndexCache:
    """Per-event index cache with single-flight rebuilds.

    Concurrent misses for the same event block on one lock; whoever gets it
    first rebuilds, the rest find the fresh entry on re-check.
    """

    def __init__(self, store: ObjectStore, ttl: float = INDEX_TTL,
                 clock=time.monotonic):
        self.store = store
        self.ttl = ttl
        self.clock = clock
        self._entries: dict[str, tuple[PageIndex, float]] = {}
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._guard = threading.Lock()

    def _lock_for(self, event: str) -> threading.Lock:
        with self._guard:
            return self._locks[event]

    def get(self, event: str, refresh: bool = False) -> PageIndex:
        with self._lock_for(event):
            entry = self._entries.get(event)
            if entry is not None and not refresh and self.clock() < entry[1]:
                return entry[0]
            index = build_index(self.store, event)
            self._entries[event] = (index, self.clock() + self.ttl)
            return index


def _parse_hour(value: str | None, name: str) -> datetime | None:
    if value is None:
        return None
    try:
        return str_to_hour(value)
    except ValueError:
        raise HTTPException(status_code=422,
                            detail=f"{name} must look like YYYYMMDDHH")


def create_app(store_root: str | Path, ttl: float = INDEX_TTL,
               clock=time.monotonic) -> FastAPI:
    store = ObjectStore(store_root)
    cache = IndexCache(store, ttl=ttl, clock=clock)
    app = FastAPI(title="tweetsvc")
    app.state.store = store
    app.state.cache = cache

    def _event_index(event: str, since: str | None, until: str | None,
                     refresh: bool) -> PageIndex:
        if not store.prefix_exists(f"events/{event}/"):
            raise HTTPException(status_code=404, detail=f"unknown event: {event}")
        index = cache.get(event, refresh=refresh)
        lo = _parse_hour(since, "since")
        hi = _parse_hour(until, "until")
        if lo is not None or hi is not None:
            index = slice_index(index, since=lo, until=hi)
        return index

    @app.get("/tweets/{event}/")
    async def get_page(event: str, page: int = 0, page_size: int = 50,
                       since: str | None = None, until: str | None = None,
                       refresh: bool = False):
        if not 1 <= page_size <= 1000:
            raise HTTPException(status_code=422,
                                detail="page_size must be in [1, 1000]")
        if page < 0:
            raise HTTPException(status_code=422, detail="page must be >= 0")
        index = _event_index(event, since, until, refresh)
        tweets = []
        for key, first, stop in locate(index, page, page_size):
            lines = gzip.decompress(store.get(key)).decode("utf-8").splitlines()
            for line in lines[first:stop]:
                tweets.append({"file": key, "tweet": json.loads(line)})
        return {
            "event": event,
            "total": index.total,
            "page": page,
            "page_size": page_size,
            "tweets": tweets,
        }

    @app.get("/tweets/{event}/detail")
    async def get_detail(event: str, file: str, tweet_id: str):
        if not file.startswith(f"events/{event}/"):
            raise HTTPException(status_code=404,
                                detail="file key does not belong to event")
        try:
            body = gzip.decompress(store.get(file))
        except Exception:
            raise HTTPException(status_code=404, detail=f"no such file: {file}")
        for line in body.splitlines():
            try:
                doc = json.loads(line)
            except ValueError:
                continue
            if doc.get("id_str") == tweet_id:
                # First occurrence wins; duplicates are an at-least-once
                # artifact and all copies are identical payloads.
                return Response(content=line, media_type="application/json")
        raise HTTPException(status_code=404,
                            detail=f"tweet {tweet_id} not in {file}")

    @app.get("/tweets/{event}/histogram")
    async def get_histogram(event: str, since: str | None = None,
                            until: str | None = None, refresh: bool = False):
        index = _event_index(event, since, until, refresh)
        buckets = histogram(index)
        return {
            "event": event,
            "total": index.total,
            "histogram": {
                hour_to_str(hour): count
                for hour, count in sorted(buckets.items())
            },
        }

    return app
