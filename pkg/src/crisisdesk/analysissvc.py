"""Batch analysis workflow runner plus the Mentions API.

A workflow is an ordered list of jobs, each receiving the event name and the
object store. The registry below is the extension seam: registering a new
job function is the whole integration, nothing in the events service
changes. Workflows fire when a collection stops, and can be rerun manually.

The only built-in job extracts the most mentioned users and writes them,
sorted, to ``events/<event>/_analysis/mentions.jsonl``; the Mentions API
pages over that file.
"""

from __future__ import annotations

import gzip
import json
import logging
import re
import threading
import uuid
from collections import Counter, defaultdict
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request

from .authsvc import AuthSettings, make_guard
from .objectstore import KeyNotFoundError, ObjectStore

logger = logging.getLogger(__name__)

MENTION_RE = re.compile(r"@([A-Za-z0-9_]{1,15})")
MENTIONS_KEY = "events/{event}/_analysis/mentions.jsonl"
RUNS_PREFIX = "events/{event}/_analysis/runs/"

# One workflow per event at a time; distinct events run concurrently.
_event_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
_locks_guard = threading.Lock()


def _lock_for(event: str) -> threading.Lock:
    with _locks_guard:
        return _event_locks[event]


def _iter_payloads(store: ObjectStore, event: str, dedupe: bool):
    seen: set[str] = set()
    for key in store.list(f"events/{event}/tweets-"):
        body = gzip.decompress(store.get(key)).decode("utf-8")
        for line in body.splitlines():
            if dedupe:
                try:
                    tweet_id = json.loads(line).get("id_str")
                except ValueError:
                    tweet_id = None
                if tweet_id is not None:
                    if tweet_id in seen:
                        continue
                    seen.add(tweet_id)
            yield line


def extract_mentions(payload: str) -> list[str]:
    """Mentioned screen names: entity records when present, else a regex
    sweep over the text."""
    try:
        doc = json.loads(payload)
    except ValueError:
        return []
    entities = doc.get("entities") or {}
    mentions = entities.get("user_mentions")
    if isinstance(mentions, list):
        return [m["screen_name"] for m in mentions
                if isinstance(m, dict) and m.get("screen_name")]
    return MENTION_RE.findall(doc.get("text") or "")


def mentions_job(event: str, store: ObjectStore, dedupe: bool = False) -> list[dict]:
    """Aggregate mention counts and write them sorted to the store.

    Sort order: count descending, then screen_name ascending. The output is
    regenerable, so it overwrites any previous run's file.
    """
    counts: Counter = Counter()
    for payload in _iter_payloads(store, event, dedupe):
        counts.update(extract_mentions(payload))
    rows = [
        {"screen_name": name, "count": count}
        for name, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    body = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in rows)
    store.replace(MENTIONS_KEY.format(event=event), body.encode("utf-8"))
    return rows


JOBS: dict[str, object] = {"mentions": mentions_job}


def run_workflow(event: str, store: ObjectStore, jobs: dict | None = None,
                 trigger: str = "manual") -> dict:
    """Run every registered job for the event; failures don't stop the rest.

    The run record is written to the store so triggers are countable after
    the fact.
    """
    jobs = JOBS if jobs is None else jobs
    with _lock_for(event):
        started = datetime.now(timezone.utc)
        run = {
            "run_id": f"{started.strftime('%Y%m%dT%H%M%S')}-{uuid.uuid4().hex[:8]}",
            "event": event,
            "trigger": trigger,
            "started_at": started.isoformat(),
            "jobs": [],
        }
        for name, job in jobs.items():
            entry = {"name": name, "status": "RUNNING"}
            try:
                result = job(event, store)
                entry["status"] = "DONE"
                if isinstance(result, list):
                    entry["rows"] = len(result)
            except Exception as exc:
                logger.exception("job %s failed for %s", name, event)
                entry["status"] = "FAILED"
                entry["error"] = str(exc)
            run["jobs"].append(entry)
        run["finished_at"] = datetime.now(timezone.utc).isoformat()
        store.put(
            RUNS_PREFIX.format(event=event) + f"{run['run_id']}.json",
            json.dumps(run, indent=1).encode("utf-8"),
        )
        return run


def list_runs(store: ObjectStore, event: str) -> list[dict]:
    keys = store.list(RUNS_PREFIX.format(event=event))
    return [json.loads(store.get(k)) for k in keys]


def create_app(store_root: str | Path,
               settings: AuthSettings | None = None) -> FastAPI:
    settings = settings or AuthSettings.from_env()
    store = ObjectStore(store_root)
    guard = make_guard(settings)
    app = FastAPI(title="analysissvc")
    app.state.store = store
    app.state.auth_settings = settings

    @app.get("/mentions/{event}/")
    async def get_mentions(event: str, page: int = 0, page_size: int = 50):
        if page < 0 or not 1 <= page_size <= 1000:
            raise HTTPException(status_code=422, detail="bad page arguments")
        try:
            body = store.get(MENTIONS_KEY.format(event=event))
        except KeyNotFoundError:
            raise HTTPException(
                status_code=404,
                detail={"code": "analysis_pending",
                        "message": f"no mentions output for {event} yet"},
            )
        rows = [json.loads(line) for line in body.decode().splitlines()]
        start = page * page_size
        return {
            "event": event,
            "total": len(rows),
            "page": page,
            "page_size": page_size,
            "rows": rows[start:start + page_size],
        }

    @app.post("/workflows/{event}/run")
    async def rerun(event: str, request: Request):
        await guard(request)
        return run_workflow(event, store, trigger="manual")

    return app
