"""Events API: lifecycle, worker orchestration, keyword publication, tags.

An event is a named keyword collection with an ACTIVE/STOPPED lifecycle and
an append-only activity log attributing every transition to a user. While an
event is ACTIVE exactly one filter worker process runs for it; the union of
all ACTIVE events' keywords is published to the connector's config file on
every transition. Stopping a collection triggers the analysis workflow once
the worker has flushed and exited.

State lives in one JSON document per event plus an annotations JSONL, under
``meta_root``. A supervisor thread respawns workers that die unexpectedly.
"""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
import sys
import threading
from collections import defaultdict
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

from .authsvc import AuthSettings, make_guard
from .objectstore import ObjectStore

logger = logging.getLogger(__name__)

EVENT_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9-]{0,63}$")
STATUSES = ("ACTIVE", "STOPPED")
WORKER_STOP_TIMEOUT = 30.0  # seconds to await a final flush before force-kill


class EventError(Exception):
    status_code = 400


class UnknownEventError(EventError):
    status_code = 404


class DuplicateEventError(EventError):
    status_code = 409


class DuplicateAnnotationError(EventError):
    status_code = 409


class ValidationError(EventError):
    status_code = 422


def tag_color(tag: str) -> dict:
    """Deterministic tag color: FNV-1a over the text, mapped to a hue."""
    h = 2166136261
    for byte in tag.encode("utf-8"):
        h ^= byte
        h = (h * 16777619) % (1 << 32)
    hue = h % 360
    return {"hue": hue, "css": f"hsl({hue}, 70%, 45%)"}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class KeywordConfigPublisher:
    """Writes the connector's keyword config with a monotone version."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def current(self) -> dict:
        if not self.path.exists():
            return {"version": 0, "keywords": []}
        return json.loads(self.path.read_text())

    def publish(self, keywords: set[str]) -> int:
        with self._lock:
            version = int(self.current().get("version", 0)) + 1
            doc = {"version": version, "keywords": sorted(keywords)}
            self.path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(doc))
            os.replace(tmp, self.path)
            return version


class SubprocessLauncher:
    """Runs filter workers as real child processes."""

    def __init__(self, log_root: str | Path, store_root: str | Path,
                 flush_threshold: int = 1000, flush_interval: float = 3600.0):
        self.log_root = str(log_root)
        self.store_root = str(store_root)
        self.flush_threshold = flush_threshold
        self.flush_interval = flush_interval

    def spawn(self, event: str, keywords: list[str]) -> subprocess.Popen:
        cmd = [
            sys.executable, "-m", "crisisdesk.filterworker",
            "--event", event,
            "--keywords", ",".join(keywords),
            "--log-root", self.log_root,
            "--store-root", self.store_root,
            "--flush-threshold", str(self.flush_threshold),
            "--flush-interval", str(self.flush_interval),
        ]
        logger.info("spawning worker: %s", " ".join(cmd))
        return subprocess.Popen(cmd)

    def alive(self, handle: subprocess.Popen) -> bool:
        return handle.poll() is None

    def stop(self, handle: subprocess.Popen,
             timeout: float = WORKER_STOP_TIMEOUT) -> None:
        if handle.poll() is not None:
            return
        handle.terminate()
        try:
            handle.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            logger.warning("worker pid %d ignored stop, killing", handle.pid)
            handle.kill()
            handle.wait(timeout=10)


class EventStore:
    """Per-event JSON documents and annotation JSONL files.

    Docs live under ``<meta_root>/events/`` so sibling files (keyword config,
    user registry) can share the meta root without being mistaken for events.
    """

    def __init__(self, meta_root: str | Path):
        self.root = Path(meta_root) / "events"
        self.root.mkdir(parents=True, exist_ok=True)

    def _doc_path(self, name: str) -> Path:
        return self.root / f"{name}.json"

    def _ann_path(self, name: str) -> Path:
        return self.root / f"{name}.annotations.jsonl"

    def exists(self, name: str) -> bool:
        return self._doc_path(name).exists()

    def load(self, name: str) -> dict | None:
        path = self._doc_path(name)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def save(self, doc: dict) -> None:
        path = self._doc_path(doc["name"])
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=1))
        os.replace(tmp, path)

    def list(self) -> list[dict]:
        docs = []
        for path in self.root.glob("*.json"):
            try:
                docs.append(json.loads(path.read_text()))
            except ValueError:
                logger.warning("skipping unreadable event doc: %s", path)
        docs.sort(key=lambda d: d["activity"][0]["at"] if d.get("activity") else "")
        return docs

    def annotations(self, name: str) -> list[dict]:
        path = self._ann_path(name)
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def append_annotation(self, name: str, record: dict) -> None:
        with open(self._ann_path(name), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


class EventService:
    """Implements the lifecycle; routes below are a thin shell around it."""

    def __init__(self, meta_root: str | Path, launcher, publisher,
                 workflow_trigger=None, supervisor_interval: float = 0.5):
        self.store = EventStore(meta_root)
        self.launcher = launcher
        self.publisher = publisher
        self.workflow_trigger = workflow_trigger or (lambda event: None)
        self.supervisor_interval = supervisor_interval
        self.registry: dict[str, object] = {}  # ACTIVE event -> worker handle
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()
        self._ann_keys: dict[str, set[tuple[str, str]]] = {}
        self._stop = threading.Event()
        self._supervisor: threading.Thread | None = None

    # -- lifecycle helpers ----------------------------------------------------

    def _lock_for(self, name: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[name]

    def _active_union(self) -> set[str]:
        return {
            k for doc in self.store.list() if doc["status"] == "ACTIVE"
            for k in doc["keywords"]
        }

    def _publish(self) -> None:
        self.publisher.publish(self._active_union())

    def start(self) -> None:
        """Respawn workers for ACTIVE events and start the supervisor."""
        for doc in self.store.list():
            if doc["status"] == "ACTIVE" and doc["name"] not in self.registry:
                self.registry[doc["name"]] = self.launcher.spawn(
                    doc["name"], doc["keywords"])
        self._publish()
        self._supervisor = threading.Thread(
            target=self._supervise, name="worker-supervisor", daemon=True)
        self._supervisor.start()

    def shutdown(self) -> None:
        self._stop.set()
        if self._supervisor is not None:
            self._supervisor.join(timeout=10)
        for name, handle in list(self.registry.items()):
            self.launcher.stop(handle)
            self.registry.pop(name, None)

    def _supervise(self) -> None:
        while not self._stop.wait(self.supervisor_interval):
            for name in list(self.registry):
                lock = self._lock_for(name)
                if not lock.acquire(blocking=False):
                    continue  # a transition owns this event right now
                try:
                    handle = self.registry.get(name)
                    if handle is None or self.launcher.alive(handle):
                        continue
                    doc = self.store.load(name)
                    if doc and doc["status"] == "ACTIVE":
                        logger.warning("worker for %s died, respawning", name)
                        self.registry[name] = self.launcher.spawn(
                            name, doc["keywords"])
                finally:
                    lock.release()

    def worker_count(self) -> int:
        return sum(1 for h in self.registry.values() if self.launcher.alive(h))

    # -- operations -------------------------------------------------------------

    def create_event(self, name: str, display_name: str,
                     keywords: list[str], user: str) -> dict:
        if not EVENT_NAME_RE.match(name or ""):
            raise ValidationError(
                "name must be a lowercase slug (letters, digits, hyphens)")
        cleaned = [k.strip() for k in keywords if isinstance(k, str) and k.strip()]
        if not cleaned:
            raise ValidationError("keywords must contain at least one entry")
        if any("," in k for k in cleaned):
            raise ValidationError("keywords may not contain commas")
        with self._lock_for(name):
            if self.store.exists(name):
                raise DuplicateEventError(f"event {name} already exists")
            at = _now()
            doc = {
                "name": name,
                "display_name": display_name or name,
                "keywords": cleaned,
                "status": "ACTIVE",
                "created_by": user,
                "activity": [
                    {"action": "CREATED", "user": user, "at": at},
                    {"action": "STARTED", "user": user, "at": at},
                ],
            }
            self.store.save(doc)
            self.registry[name] = self.launcher.spawn(name, cleaned)
        self._publish()
        return doc

    def set_status(self, name: str, status: str, user: str) -> dict:
        if status not in STATUSES:
            raise ValidationError(f"status must be one of {STATUSES}")
        with self._lock_for(name):
            doc = self.store.load(name)
            if doc is None:
                raise UnknownEventError(f"unknown event: {name}")
            if doc["status"] == status:
                return doc  # idempotent no-op, no activity entry
            if status == "STOPPED":
                handle = self.registry.pop(name, None)
                if handle is not None:
                    self.launcher.stop(handle)
                doc["status"] = "STOPPED"
                doc["activity"].append(
                    {"action": "STOPPED", "user": user, "at": _now()})
                self.store.save(doc)
            else:
                doc["status"] = "ACTIVE"
                doc["activity"].append(
                    {"action": "STARTED", "user": user, "at": _now()})
                self.store.save(doc)
                self.registry[name] = self.launcher.spawn(name, doc["keywords"])
        self._publish()
        if status == "STOPPED":
            # Worker has flushed and exited; the corpus is complete.
            self.workflow_trigger(name)
        return doc

    def get_event(self, name: str) -> dict:
        doc = self.store.load(name)
        if doc is None:
            raise UnknownEventError(f"unknown event: {name}")
        return doc

    def list_events(self) -> list[dict]:
        return self.store.list()

    # -- annotations -----------------------------------------------------------

    def _ann_index(self, name: str) -> set[tuple[str, str]]:
        if name not in self._ann_keys:
            self._ann_keys[name] = {
                (a["tweet_id"], a["tag"]) for a in self.store.annotations(name)
            }
        return self._ann_keys[name]

    def add_annotation(self, name: str, tweet_id: str, tag: str, user: str) -> dict:
        if not tweet_id or not tag:
            raise ValidationError("tweet_id and tag are required")
        with self._lock_for(name):
            if not self.store.exists(name):
                raise UnknownEventError(f"unknown event: {name}")
            index = self._ann_index(name)
            if (tweet_id, tag) in index:
                raise DuplicateAnnotationError(
                    f"tweet {tweet_id} already tagged {tag!r}")
            record = {
                "event": name,
                "tweet_id": tweet_id,
                "tag": tag,
                "author": user,
                "created_at": _now(),
            }
            self.store.append_annotation(name, record)
            index.add((tweet_id, tag))
        return {**record, "color": tag_color(tag)}

    def list_annotations(self, name: str, tweet_id: str | None = None) -> list[dict]:
        if not self.store.exists(name):
            raise UnknownEventError(f"unknown event: {name}")
        records = self.store.annotations(name)
        if tweet_id is not None:
            records = [r for r in records if r["tweet_id"] == tweet_id]
        return [{**r, "color": tag_color(r["tag"])} for r in records]


class _CreateBody(BaseModel):
    name: str
    display_name: str = ""
    keywords: list[str]


class _StatusBody(BaseModel):
    status: str


class _AnnotationBody(BaseModel):
    tag: str
    tweet_id: str | None = None


def default_workflow_trigger(store_root: str | Path):
    """Run the analysis workflow in a background thread on each STOP."""
    from .analysissvc import run_workflow

    def trigger(event: str) -> None:
        def job():
            try:
                run_workflow(event, ObjectStore(store_root), trigger="stop")
            except Exception:
                logger.exception("workflow for %s failed", event)

        threading.Thread(target=job, name=f"workflow-{event}", daemon=True).start()

    return trigger


def create_app(meta_root: str | Path, store_root: str | Path,
               log_root: str | Path, settings: AuthSettings | None = None,
               launcher=None, config_path: str | Path | None = None,
               workflow_trigger=None, supervisor_interval: float = 0.5,
               flush_threshold: int = 1000,
               flush_interval: float = 3600.0) -> FastAPI:
    settings = settings or AuthSettings.from_env()
    launcher = launcher or SubprocessLauncher(
        log_root, store_root,
        flush_threshold=flush_threshold, flush_interval=flush_interval)
    publisher = KeywordConfigPublisher(
        config_path or Path(meta_root) / "keywords.json")
    if workflow_trigger is None:
        workflow_trigger = default_workflow_trigger(store_root)
    service = EventService(
        meta_root, launcher, publisher,
        workflow_trigger=workflow_trigger,
        supervisor_interval=supervisor_interval)
    service.start()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        service.shutdown()

    guard = make_guard(settings)
    app = FastAPI(title="eventsvc", lifespan=lifespan)
    app.state.service = service
    app.state.auth_settings = settings

    def _fail(exc: EventError):
        raise HTTPException(status_code=exc.status_code, detail=str(exc))

    @app.get("/events/")
    async def list_events():
        return {"events": service.list_events()}

    @app.post("/events/", status_code=201)
    async def create_event(body: _CreateBody, request: Request):
        principal = await guard(request)
        try:
            return service.create_event(
                body.name, body.display_name, body.keywords, principal.subject)
        except EventError as exc:
            _fail(exc)

    @app.get("/events/{name}")
    async def get_event(name: str):
        try:
            return service.get_event(name)
        except EventError as exc:
            _fail(exc)

    @app.patch("/events/{name}")
    async def set_status(name: str, body: _StatusBody, request: Request):
        principal = await guard(request)
        try:
            return service.set_status(name, body.status, principal.subject)
        except EventError as exc:
            _fail(exc)

    @app.get("/events/{name}/annotations/")
    async def list_annotations(name: str, tweet_id: str | None = None):
        try:
            return {"annotations": service.list_annotations(name, tweet_id)}
        except EventError as exc:
            _fail(exc)

    @app.post("/events/{name}/annotations/", status_code=201)
    async def add_annotation(name: str, body: _AnnotationBody, request: Request,
                             tweet_id: str | None = None):
        principal = await guard(request)
        try:
            return service.add_annotation(
                name, body.tweet_id or tweet_id or "", body.tag,
                principal.subject)
        except EventError as exc:
            _fail(exc)

    return app
