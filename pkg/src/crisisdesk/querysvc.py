"""Filter API: LIKE-style text search materialized into temp result tables.

A query scans every batch file of an event for a case-insensitive substring
(the same match rule the filter workers apply, with the pattern as the only
keyword) and writes overview rows to a temporary JSONL file. Follow-up
requests page over that file, so pagination is stable no matter how often a
page is re-read. Results expire after a TTL and are garbage-collected.

CSV export projects raw payloads onto dot-path fields (``user.screen_name``)
with RFC 4180 quoting; files land in the object store under ``exports/``.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

from .authsvc import AuthSettings, make_guard
from .filterworker import classify
from .objectstore import ObjectStore

logger = logging.getLogger(__name__)

JOB_TTL = 1800.0  # seconds a result table stays readable
GC_INTERVAL = 60.0
EXPORT_PREFIX = "exports"


class QueryError(Exception):
    status_code = 400


class UnknownEventError(QueryError):
    status_code = 404


class GoneError(QueryError):
    status_code = 410


class QueryValidationError(QueryError):
    status_code = 422


@dataclass(frozen=True)
class QueryJob:
    id: str
    event: str
    pattern: str
    created_at: str
    created_mono: float
    path: Path
    row_count: int

    def public(self) -> dict:
        return {
            "job_id": self.id,
            "event": self.event,
            "pattern": self.pattern,
            "created_at": self.created_at,
            "row_count": self.row_count,
        }


def extract_path(doc, dotted: str):
    """Resolve a dot path through nested objects; None when absent."""
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict):
            return None
        node = node.get(part)
        if node is None:
            return None
    return node


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value, separators=(",", ":"), ensure_ascii=False)


def _overview_row(line: str, source_file: str) -> dict | None:
    try:
        doc = json.loads(line)
    except ValueError:
        return None
    if not isinstance(doc, dict):
        return None
    user = doc.get("user") or {}
    return {
        "tweet_id": doc.get("id_str"),
        "created_at": doc.get("created_at"),
        "screen_name": user.get("screen_name") if isinstance(user, dict) else None,
        "text": doc.get("text"),
        "source_file": source_file,
    }


class QueryService:
    """Owns the job table, the scan pool, and result-table lifecycle."""

    def __init__(self, store: ObjectStore, work_dir: str | Path,
                 ttl: float = JOB_TTL, clock=time.monotonic,
                 max_workers: int = 4):
        self.store = store
        self.work_dir = Path(work_dir)
        self.work_dir.mkdir(parents=True, exist_ok=True)
        self.ttl = ttl
        self.clock = clock
        self._jobs: dict[str, QueryJob] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_workers,
                                        thread_name_prefix="query-scan")

    def _require_event(self, event: str) -> None:
        if not self.store.prefix_exists(f"events/{event}/"):
            raise UnknownEventError(f"unknown event: {event}")

    def _matching_lines(self, event: str, pattern: str | None):
        """Yield (key, line) over the corpus in (hour, seq, in-file) order.

        Files decompress in parallel but results merge in listing order, so
        two identical queries materialize identical tables.
        """
        keys = self.store.list(f"events/{event}/tweets-")

        def scan(key: str) -> list[tuple[str, str]]:
            body = gzip.decompress(self.store.get(key)).decode("utf-8")
            return [
                (key, line) for line in body.splitlines()
                if pattern is None or classify(line, [pattern])
            ]

        futures = [self._pool.submit(scan, key) for key in keys]
        for future in futures:
            yield from future.result()

    def submit_query(self, event: str, pattern: str) -> QueryJob:
        if not pattern:
            raise QueryValidationError("pattern must be non-empty")
        self._require_event(event)
        job_id = uuid.uuid4().hex
        path = self.work_dir / f"{job_id}.jsonl"
        rows = 0
        with open(path, "w", encoding="utf-8") as fh:
            for key, line in self._matching_lines(event, pattern):
                row = _overview_row(line, key)
                if row is None:
                    continue
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
                rows += 1
        job = QueryJob(
            id=job_id, event=event, pattern=pattern,
            created_at=datetime.now(timezone.utc).isoformat(),
            created_mono=self.clock(), path=path, row_count=rows,
        )
        with self._lock:
            self._jobs[job_id] = job
        return job

    def _live_job(self, job_id: str) -> QueryJob:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is not None and self.clock() >= job.created_mono + self.ttl:
                self._drop(job)
                job = None
        if job is None:
            raise GoneError(f"job {job_id} is gone (expired or never existed)")
        return job

    def get_results(self, job_id: str, page: int, page_size: int) -> dict:
        if page < 0 or not 1 <= page_size <= 1000:
            raise QueryValidationError("bad page arguments")
        job = self._live_job(job_id)
        start = page * page_size
        rows = []
        with open(job.path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                if i < start:
                    continue
                if i >= start + page_size:
                    break
                rows.append(json.loads(line))
        return {**job.public(), "page": page, "page_size": page_size, "rows": rows}

    def export_csv(self, event: str, fields: list[str],
                   pattern: str | None = None) -> tuple[str, int]:
        cleaned = [f.strip() for f in fields if isinstance(f, str) and f.strip()]
        if not cleaned:
            raise QueryValidationError("fields must contain at least one dot path")
        self._require_event(event)
        buffer = io.StringIO()
        writer = csv.writer(buffer)  # default \r\n line endings per RFC 4180
        writer.writerow(cleaned)
        rows = 0
        for _, line in self._matching_lines(event, pattern or None):
            try:
                doc = json.loads(line)
            except ValueError:
                continue
            writer.writerow([_csv_cell(extract_path(doc, f)) for f in cleaned])
            rows += 1
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        key = f"{EXPORT_PREFIX}/{event}/search-{stamp}-{uuid.uuid4().hex[:8]}.csv"
        self.store.put(key, buffer.getvalue().encode("utf-8"))
        return key, rows

    # -- expiry ---------------------------------------------------------------

    def _drop(self, job: QueryJob) -> None:
        self._jobs.pop(job.id, None)
        try:
            job.path.unlink(missing_ok=True)
        except OSError:
            pass

    def gc(self) -> int:
        """Drop expired jobs; returns how many were collected."""
        now = self.clock()
        with self._lock:
            expired = [j for j in self._jobs.values()
                       if now >= j.created_mono + self.ttl]
            for job in expired:
                self._drop(job)
        return len(expired)


class _QueryBody(BaseModel):
    pattern: str


class _ExportBody(BaseModel):
    fields: list[str]
    pattern: str | None = None


def create_app(store_root: str | Path, work_dir: str | Path | None = None,
               settings: AuthSettings | None = None, ttl: float = JOB_TTL,
               clock=time.monotonic, gc_interval: float = GC_INTERVAL) -> FastAPI:
    settings = settings or AuthSettings.from_env()
    store = ObjectStore(store_root)
    service = QueryService(
        store, work_dir or Path(store_root) / "_query_tmp",
        ttl=ttl, clock=clock,
    )
    stop_gc = threading.Event()

    def _gc_loop():
        while not stop_gc.wait(gc_interval):
            collected = service.gc()
            if collected:
                logger.info("collected %d expired query jobs", collected)

    threading.Thread(target=_gc_loop, name="query-gc", daemon=True).start()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        stop_gc.set()

    guard = make_guard(settings)
    app = FastAPI(title="querysvc", lifespan=lifespan)
    app.state.service = service
    app.state.auth_settings = settings

    def _fail(exc: QueryError):
        raise HTTPException(status_code=exc.status_code, detail=str(exc))

    @app.post("/filter/{event}/", status_code=201)
    async def submit(event: str, body: _QueryBody, request: Request):
        await guard(request)
        try:
            return service.submit_query(event, body.pattern).public()
        except QueryError as exc:
            _fail(exc)

    @app.get("/filter/{event}/results/{job_id}")
    async def results(event: str, job_id: str, page: int = 0,
                      page_size: int = 50):
        try:
            result = service.get_results(job_id, page, page_size)
        except QueryError as exc:
            _fail(exc)
        if result["event"] != event:
            raise HTTPException(status_code=404,
                                detail="job belongs to a different event")
        return result

    @app.post("/filter/{event}/export", status_code=201)
    async def export(event: str, body: _ExportBody, request: Request):
        await guard(request)
        try:
            key, rows = service.export_csv(event, body.fields, body.pattern)
        except QueryError as exc:
            _fail(exc)
        return {"csv_key": key, "rows": rows}

    return app
