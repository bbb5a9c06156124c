"""Filesystem-backed object store for immutable compressed batch objects.

Objects are addressed by slash-separated keys and live as plain files under a
root directory. Writes are atomic (temp file + link), existing keys cannot be
overwritten through ``put``, and listings are lexicographically sorted -- which,
with the zero-padded batch key codec below, makes listing order equal
chronological (hour, seq) order.

The store also carries the batch filename codec used by the collection
pipeline: ``events/<event>/tweets-<YYYYMMDDHH>-<seq:04>-<count>.jsonl.gz``.
The hour, sequence number, and record count ride in the filename so readers
can index a dataset from a listing alone, without opening any object.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

HOUR_FORMAT = "%Y%m%d%H"

_BATCH_NAME_RE = re.compile(r"^tweets-(\d{10})-(\d{4})-(\d+)\.jsonl\.gz$")


class ObjectStoreError(Exception):
    """Base error for object store operations."""


class KeyExistsError(ObjectStoreError):
    """Raised when ``put`` targets a key that already holds an object."""


class KeyNotFoundError(ObjectStoreError):
    """Raised when ``get`` targets a missing key."""


def hour_to_str(hour: datetime) -> str:
    """Format an hour bucket as the 10-digit key component."""
    return hour.strftime(HOUR_FORMAT)


def str_to_hour(text: str) -> datetime:
    """Parse a 10-digit hour component into a UTC datetime."""
    return datetime.strptime(text, HOUR_FORMAT).replace(tzinfo=timezone.utc)


def hour_bucket(moment: datetime) -> datetime:
    """Truncate a timestamp to its UTC hour."""
    return moment.astimezone(timezone.utc).replace(minute=0, second=0, microsecond=0)


def batch_key(event: str, hour: datetime, seq: int, count: int) -> str:
    """Build the object key for one flushed batch."""
    if count < 1:
        raise ValueError("batch files are never empty")
    if not 0 <= seq <= 9999:
        raise ValueError(f"seq out of range: {seq}")
    return f"events/{event}/tweets-{hour_to_str(hour)}-{seq:04d}-{count}.jsonl.gz"


def parse_batch_key(key: str) -> tuple[str, datetime, int, int] | None:
    """Parse a batch key into (event, hour, seq, count); None if not a batch key."""
    parts = key.split("/")
    if len(parts) != 3 or parts[0] != "events":
        return None
    m = _BATCH_NAME_RE.match(parts[2])
    if m is None:
        return None
    try:
        hour = str_to_hour(m.group(1))
    except ValueError:
        return None
    return parts[1], hour, int(m.group(2)), int(m.group(3))


@dataclass
class StoreStats:
    """Operation counters, used by tests to assert access patterns."""

    puts: int = 0
    gets: int = 0
    lists: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, name: str) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + 1)


class ObjectStore:
    """Local-directory object store with atomic, immutable puts.

    Keys map to relative file paths under ``root``. Temp files are hidden
    (dot-prefixed) and never appear in listings.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.stats = StoreStats()

    def _path(self, key: str) -> Path:
        if not key or key.startswith("/") or key.endswith("/"):
            raise ObjectStoreError(f"invalid key: {key!r}")
        parts = key.split("/")
        if any(p in ("", ".", "..") for p in parts):
            raise ObjectStoreError(f"invalid key: {key!r}")
        return self.root.joinpath(*parts)

    def _write_temp(self, dest: Path, content: bytes) -> Path:
        dest.parent.mkdir(parents=True, exist_ok=True)
        tmp = dest.parent / f".tmp-{uuid.uuid4().hex}"
        with open(tmp, "wb") as fh:
            fh.write(content)
            fh.flush()
            os.fsync(fh.fileno())
        return tmp

    def put(self, key: str, content: bytes) -> None:
        """Store ``content`` at ``key``. Existing keys are rejected."""
        dest = self._path(key)
        tmp = self._write_temp(dest, content)
        try:
            # link() is atomic and fails on existing targets, unlike rename().
            os.link(tmp, dest)
        except FileExistsError:
            raise KeyExistsError(f"key already exists: {key}") from None
        finally:
            tmp.unlink(missing_ok=True)
        self._sync_dir(dest.parent)
        self.stats.bump("puts")

    def replace(self, key: str, content: bytes) -> None:
        """Atomically write ``key``, overwriting any existing object.

        Reserved for regenerable outputs (analysis results); batch objects go
        through ``put`` and stay immutable.
        """
        dest = self._path(key)
        tmp = self._write_temp(dest, content)
        os.replace(tmp, dest)
        self._sync_dir(dest.parent)
        self.stats.bump("puts")

    def get(self, key: str) -> bytes:
        dest = self._path(key)
        try:
            content = dest.read_bytes()
        except (FileNotFoundError, IsADirectoryError):
            raise KeyNotFoundError(f"no such key: {key}") from None
        self.stats.bump("gets")
        return content

    def exists(self, key: str) -> bool:
        return self._path(key).is_file()

    def prefix_exists(self, prefix: str) -> bool:
        """True if any object exists under ``prefix`` or its directory does."""
        base = self.root / prefix.rstrip("/")
        return base.exists() or bool(self.list(prefix))

    def list(self, prefix: str = "") -> list[str]:
        """All keys starting with ``prefix``, lexicographically sorted."""
        self.stats.bump("lists")
        # Narrow the walk to the deepest directory the prefix pins down.
        dir_part = prefix.rsplit("/", 1)[0] if "/" in prefix else ""
        base = self.root / dir_part if dir_part else self.root
        if not base.is_dir():
            return []
        keys = []
        for dirpath, dirnames, filenames in os.walk(base):
            dirnames[:] = [d for d in dirnames if not d.startswith(".")]
            rel = Path(dirpath).relative_to(self.root)
            for name in filenames:
                if name.startswith("."):
                    continue
                key = name if rel == Path(".") else f"{rel.as_posix()}/{name}"
                if key.startswith(prefix):
                    keys.append(key)
        keys.sort()
        return keys

    @staticmethod
    def _sync_dir(path: Path) -> None:
        fd = os.open(path, os.O_RDONLY)
        try:
            os.fsync(fd)
        finally:
            os.close(fd)
