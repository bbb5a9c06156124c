"""Embedded append-only multi-topic commit log with consumer groups.

The log buffers messages between pipeline stages and is the recovery point
after a crash: producers append, consumers fetch from a per-group in-memory
position and periodically commit a durable offset. On restart a group resumes
from its committed offset, so any record processed but not yet committed is
seen again (at-least-once).

On-disk layout under ``root``:

    <root>/<topic>/<partition>.seg     append-only segment, length-prefixed frames
    <root>/_groups/<group>.json        committed offsets per (topic, partition)

Each frame is ``>Id`` (payload length, appended-at epoch seconds) followed by
the payload bytes. Offsets are implicit frame positions, contiguous from 0
(or from the start offset recorded by an explicit truncation). A torn trailing
frame left by a crashed writer is dropped the next time a writer appends to
that partition; readers simply never surface incomplete frames.

Concurrency contract: concurrent producers and concurrent consumers in
distinct groups are safe (one writer process per topic, one logical consumer
per group -- there is no intra-group rebalancing). The in-memory fetch
position belongs to the open handle and dies with it by design.
"""

from __future__ import annotations

import json
import logging
import os
import re
import struct
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

_FRAME_HEADER = struct.Struct(">Id")  # payload length, appended_at epoch seconds

TOPIC_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")

GROUPS_DIR = "_groups"
META_FILE = "_meta.json"


class CommitLogError(Exception):
    """Base error for commit log operations."""


class UnknownTopicError(CommitLogError):
    pass


class CommitRejectedError(CommitLogError):
    """Offset regression or commit without a prior fetch."""


@dataclass(frozen=True)
class LogRecord:
    """One appended record with its assigned coordinates."""

    topic: str
    partition: int
    offset: int
    payload: bytes
    appended_at: datetime


class _Partition:
    """A single segment file plus its in-memory offset -> byte-position index."""

    def __init__(self, path: Path, start_offset: int = 0):
        self.path = path
        self.start_offset = start_offset
        self.positions: list[int] = []  # byte position of frame i - start_offset
        self.scanned_end = 0  # bytes of the file covered by `positions`
        self._write_fh = None
        self._repaired = False
        path.touch(exist_ok=True)
        self.refresh()

    @property
    def next_offset(self) -> int:
        return self.start_offset + len(self.positions)

    def refresh(self) -> None:
        """Extend the index over frames appended since the last scan.

        Never truncates: a partial trailing frame may be a concurrent writer
        mid-append, so it is just not indexed yet.
        """
        size = self.path.stat().st_size
        if size <= self.scanned_end:
            return
        with open(self.path, "rb") as fh:
            fh.seek(self.scanned_end)
            pos = self.scanned_end
            while pos + _FRAME_HEADER.size <= size:
                header = fh.read(_FRAME_HEADER.size)
                if len(header) < _FRAME_HEADER.size:
                    break
                length, _ = _FRAME_HEADER.unpack(header)
                end = pos + _FRAME_HEADER.size + length
                if end > size:
                    break  # torn or in-flight frame
                fh.seek(length, os.SEEK_CUR)
                self.positions.append(pos)
                self.scanned_end = pos = end

    def _ensure_writable(self) -> None:
        if not self._repaired:
            # Drop any torn tail before the first append of this handle.
            self.refresh()
            size = self.path.stat().st_size
            if size > self.scanned_end:
                logger.warning(
                    "dropping %d torn bytes at tail of %s", size - self.scanned_end, self.path
                )
                with open(self.path, "r+b") as fh:
                    fh.truncate(self.scanned_end)
            self._repaired = True
        if self._write_fh is None:
            self._write_fh = open(self.path, "ab")

    def append(self, payload: bytes, appended_at: float, fsync: bool = True) -> int:
        self._ensure_writable()
        self.refresh()
        frame = _FRAME_HEADER.pack(len(payload), appended_at) + payload
        self._write_fh.write(frame)
        self._write_fh.flush()
        if fsync:
            os.fsync(self._write_fh.fileno())
        offset = self.next_offset
        self.positions.append(self.scanned_end)
        self.scanned_end += len(frame)
        return offset

    def sync(self) -> None:
        if self._write_fh is not None:
            self._write_fh.flush()
            os.fsync(self._write_fh.fileno())

    def read_from(self, offset: int, max_records: int) -> list[tuple[int, bytes, float]]:
        """Records starting at ``offset``: list of (offset, payload, appended_at)."""
        self.refresh()
        if offset < self.start_offset:
            offset = self.start_offset
        idx = offset - self.start_offset
        if idx >= len(self.positions):
            return []
        out = []
        with open(self.path, "rb") as fh:
            fh.seek(self.positions[idx])
            for i in range(idx, min(idx + max_records, len(self.positions))):
                header = fh.read(_FRAME_HEADER.size)
                length, appended_at = _FRAME_HEADER.unpack(header)
                payload = fh.read(length)
                out.append((self.start_offset + i, payload, appended_at))
        return out

    def truncate_before(self, offset: int) -> None:
        """Drop records below ``offset``; remaining records keep their offsets."""
        self.refresh()
        if offset <= self.start_offset:
            return
        offset = min(offset, self.next_offset)
        idx = offset - self.start_offset
        keep_from = self.positions[idx] if idx < len(self.positions) else self.scanned_end
        tmp = self.path.with_suffix(".seg.tmp")
        with open(self.path, "rb") as src, open(tmp, "wb") as dst:
            src.seek(keep_from)
            while True:
                chunk = src.read(1 << 20)
                if not chunk:
                    break
                dst.write(chunk)
            dst.flush()
            os.fsync(dst.fileno())
        if self._write_fh is not None:
            self._write_fh.close()
            self._write_fh = None
        os.replace(tmp, self.path)
        self.positions = [p - keep_from for p in self.positions[idx:]]
        self.scanned_end -= keep_from
        self.start_offset = offset

    def close(self) -> None:
        if self._write_fh is not None:
            self._write_fh.close()
            self._write_fh = None


class CommitLog:
    """Durable multi-topic log; see module docstring for guarantees."""

    def __init__(self, root: str | Path, default_partitions: int = 1):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / GROUPS_DIR).mkdir(exist_ok=True)
        self.default_partitions = default_partitions
        self._lock = threading.RLock()
        self._topics: dict[str, list[_Partition]] = {}
        self._rr: dict[str, int] = {}  # round-robin cursor per topic
        self._committed: dict[tuple[str, str, int], int] = {}
        self._positions: dict[tuple[str, str, int], int] = {}
        self._last_fetched: dict[tuple[str, str, int], int] = {}
        self._loaded_groups: set[str] = set()
        self._closed = False
        for entry in sorted(self.root.iterdir()):
            if entry.is_dir() and not entry.name.startswith("_"):
                self._open_topic(entry.name)

    # -- topics ------------------------------------------------------------

    def _open_topic(self, topic: str) -> None:
        tdir = self.root / topic
        start_offsets: dict[str, int] = {}
        meta = tdir / META_FILE
        if meta.exists():
            start_offsets = json.loads(meta.read_text())
        segs = sorted(tdir.glob("*.seg"), key=lambda p: int(p.stem))
        self._topics[topic] = [
            _Partition(p, start_offsets.get(p.stem, 0)) for p in segs
        ]
        self._rr.setdefault(topic, 0)

    def create_topic(self, topic: str, partitions: int | None = None) -> None:
        self._check_open()
        if not TOPIC_NAME_RE.match(topic):
            raise CommitLogError(f"invalid topic name: {topic!r}")
        with self._lock:
            if topic in self._topics:
                return
            n = partitions or self.default_partitions
            tdir = self.root / topic
            tdir.mkdir(exist_ok=True)
            self._topics[topic] = [_Partition(tdir / f"{i}.seg") for i in range(n)]
            self._rr[topic] = 0

    def topics(self) -> list[str]:
        return sorted(self._topics)

    def partition_count(self, topic: str) -> int:
        return len(self._require_topic(topic))

    def _require_topic(self, topic: str) -> list[_Partition]:
        parts = self._topics.get(topic)
        if parts is None:
            raise UnknownTopicError(f"unknown topic: {topic}")
        return parts

    def _check_open(self) -> None:
        if self._closed:
            raise CommitLogError("log is closed")

    # -- producing ---------------------------------------------------------

    def append(self, topic: str, payload: bytes, fsync: bool = True) -> tuple[int, int]:
        """Durably append ``payload``; returns (partition, offset).

        The partition is chosen round-robin across the topic's partitions.
        """
        self._check_open()
        with self._lock:
            if topic not in self._topics:
                self.create_topic(topic)
            parts = self._topics[topic]
            p = self._rr[topic] % len(parts)
            self._rr[topic] += 1
            offset = parts[p].append(payload, time.time(), fsync=fsync)
            return p, offset

    def append_many(self, topic: str, payloads: list[bytes]) -> list[tuple[int, int]]:
        """Append a batch with a single fsync per touched partition."""
        self._check_open()
        with self._lock:
            coords = [self.append(topic, p, fsync=False) for p in payloads]
            touched = {p for p, _ in coords}
            for p in touched:
                self._topics[topic][p].sync()
            return coords

    def end_offset(self, topic: str, partition: int) -> int:
        """The next offset to be assigned in the partition."""
        with self._lock:
            part = self._require_topic(topic)[partition]
            part.refresh()
            return part.next_offset

    # -- consuming ---------------------------------------------------------

    def _group_path(self, group: str) -> Path:
        return self.root / GROUPS_DIR / f"{group}.json"

    def _load_group(self, group: str) -> None:
        if group in self._loaded_groups:
            return
        path = self._group_path(group)
        if path.exists():
            for key, committed in json.loads(path.read_text()).items():
                topic, _, partition = key.rpartition(":")
                self._committed[(group, topic, int(partition))] = committed
        self._loaded_groups.add(group)

    def committed(self, group: str, topic: str, partition: int) -> int:
        """Last committed offset for the group, -1 if none."""
        with self._lock:
            self._load_group(group)
            return self._committed.get((group, topic, partition), -1)

    def fetch(self, group: str, topic: str, max_records: int = 100) -> list[LogRecord]:
        """Up to ``max_records`` records after the group's current position.

        Advances the in-memory position only; the committed offset is
        untouched until ``commit``. A fresh (or restarted) group starts right
        after its committed offset.
        """
        self._check_open()
        with self._lock:
            parts = self._require_topic(topic)
            self._load_group(group)
            records: list[LogRecord] = []
            for p, part in enumerate(parts):
                if len(records) >= max_records:
                    break
                key = (group, topic, p)
                pos = self._positions.get(key)
                if pos is None:
                    pos = self._committed.get(key, -1) + 1
                batch = part.read_from(pos, max_records - len(records))
                for offset, payload, appended_at in batch:
                    records.append(
                        LogRecord(
                            topic=topic,
                            partition=p,
                            offset=offset,
                            payload=payload,
                            appended_at=datetime.fromtimestamp(appended_at, tz=timezone.utc),
                        )
                    )
                if batch:
                    self._positions[key] = batch[-1][0] + 1
                    self._last_fetched[key] = batch[-1][0]
                else:
                    self._positions.setdefault(key, pos)
            return records

    def commit(self, group: str, topic: str, partition: int, offset: int) -> None:
        """Durably record ``offset`` as processed for the group/partition."""
        self._check_open()
        with self._lock:
            self._require_topic(topic)
            self._load_group(group)
            key = (group, topic, partition)
            last_fetched = self._last_fetched.get(key)
            if last_fetched is None or offset > last_fetched:
                raise CommitRejectedError(
                    f"commit {offset} beyond last fetched {last_fetched} for {key}"
                )
            current = self._committed.get(key, -1)
            if offset < current:
                raise CommitRejectedError(f"offset regression: {offset} < {current}")
            self._committed[key] = offset
            self._persist_group(group)

    def _persist_group(self, group: str) -> None:
        state = {
            f"{topic}:{partition}": committed
            for (g, topic, partition), committed in sorted(self._committed.items())
            if g == group
        }
        path = self._group_path(group)
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w") as fh:
            json.dump(state, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    # -- admin ---------------------------------------------------------------

    def truncate_before(self, topic: str, partition: int, offset: int) -> None:
        """Explicitly drop records below ``offset`` (the only retention path)."""
        self._check_open()
        with self._lock:
            parts = self._require_topic(topic)
            parts[partition].truncate_before(offset)
            meta = {str(i): p.start_offset for i, p in enumerate(parts) if p.start_offset}
            (self.root / topic / META_FILE).write_text(json.dumps(meta))

    def close(self) -> None:
        with self._lock:
            for parts in self._topics.values():
                for part in parts:
                    part.close()
            self._closed = True
