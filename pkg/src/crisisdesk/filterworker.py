"""Per-event filter worker: raw topic in, compressed batch files out.

Each active event runs one worker under its own consumer group. The worker
examines every raw message, keeps the ones whose JSON text contains any of
the event's keywords (case-insensitive substring over the whole payload,
screen names and URLs included), and flushes the buffer as one gzip JSONL
batch when it reaches the flush threshold or when the oldest buffered
message has waited a full flush interval.

The offset is committed only after the batch file is durably stored, so a
crash between write and commit re-emits the batch on restart: duplicates are
possible, loss is not. Readers downstream tolerate the duplicates.
"""

from __future__ import annotations

import argparse
import gzip
import logging
import signal
import sys
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime

from .commitlog import CommitLog, LogRecord
from .objectstore import (
    KeyExistsError,
    ObjectStore,
    batch_key,
    hour_bucket,
    parse_batch_key,
)

logger = logging.getLogger(__name__)

FLUSH_THRESHOLD = 1000  # records per batch file
FLUSH_INTERVAL = 3600.0  # seconds a buffered message may wait
MAX_SEQ = 9999


def classify(payload: str, keywords: list[str] | tuple[str, ...]) -> bool:
    """True iff any keyword occurs case-insensitively anywhere in the text.

    The search runs over the raw JSON, not a parsed field, so keywords also
    hit inside screen names, URLs, and malformed payloads.
    """
    low = payload.casefold()
    return any(k.casefold() in low for k in keywords)


@dataclass
class WorkerStats:
    examined: int = 0
    matched: int = 0
    files_written: int = 0
    records_written: int = 0
    commits: int = 0
    put_retries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "examined": self.examined,
                "matched": self.matched,
                "files_written": self.files_written,
                "records_written": self.records_written,
                "commits": self.commits,
                "put_retries": self.put_retries,
            }


class FilterWorker:
    """Single consumer loop with an age-based flush timer.

    ``probe``, when given, is called with a stage name at each durability
    boundary ("examined", "pre_put", "post_put", "post_commit"); an exception
    raised from it aborts the loop without any graceful flush, which is how
    the crash tests cut the worker down mid-stride.
    """

    def __init__(self, event: str, keywords: list[str] | tuple[str, ...],
                 log: CommitLog, store: ObjectStore,
                 group: str | None = None, topic: str = "raw",
                 flush_threshold: int = FLUSH_THRESHOLD,
                 flush_interval: float = FLUSH_INTERVAL,
                 fetch_batch: int = 500, clock=time.monotonic,
                 probe=None):
        if flush_threshold < 1:
            raise ValueError("flush_threshold must be >= 1")
        if not keywords:
            raise ValueError("keywords must be non-empty")
        self.event = event
        self.keywords = tuple(keywords)
        self.log = log
        self.store = store
        self.group = group or f"filter-{event}"
        self.topic = topic
        self.flush_threshold = flush_threshold
        self.flush_interval = flush_interval
        self.fetch_batch = fetch_batch
        self.clock = clock
        self.probe = probe or (lambda stage: None)
        self.stats = WorkerStats()

        # FilterState: all of it ephemeral, rebuilt from the log on restart.
        self.buffer: list[LogRecord] = []
        self.buffer_opened_at: float | None = None
        self.last_examined: dict[int, int] = {}

        self._stop = threading.Event()
        self._seq: dict[datetime, int] = self._scan_existing_seqs()

    def _scan_existing_seqs(self) -> dict[datetime, int]:
        """Resume seq numbering after the files already stored per hour."""
        seqs: dict[datetime, int] = {}
        for key in self.store.list(f"events/{self.event}/tweets-"):
            parsed = parse_batch_key(key)
            if parsed is None:
                continue
            _, hour, seq, _ = parsed
            seqs[hour] = max(seqs.get(hour, -1), seq)
        return {hour: seq + 1 for hour, seq in seqs.items()}

    def stop(self) -> None:
        self._stop.set()

    # -- flushing ------------------------------------------------------------

    def _next_key(self, hour: datetime, count: int) -> str:
        seq = self._seq.get(hour, 0)
        if seq > MAX_SEQ:
            raise RuntimeError(f"batch seq exhausted for hour {hour}")
        return batch_key(self.event, hour, seq, count)

    def _flush(self) -> bool:
        """Write the whole buffer as one batch, then commit. False if the
        store refused and the buffer was retained."""
        if not self.buffer:
            return True
        hour = hour_bucket(self.buffer[0].appended_at)
        body = b"".join(r.payload + b"\n" for r in self.buffer)
        content = gzip.compress(body)
        count = len(self.buffer)

        self.probe("pre_put")
        backoff = 0.05
        for attempt in range(8):
            key = self._next_key(hour, count)
            try:
                self.store.put(key, content)
                break
            except KeyExistsError:
                # Another incarnation claimed this seq; take the next one.
                self._seq[hour] = self._seq.get(hour, 0) + 1
                self.stats.put_retries += 1
            except Exception as exc:
                logger.warning("store put failed (attempt %d): %s", attempt + 1, exc)
                self.stats.put_retries += 1
                if self._stop.wait(backoff):
                    return False
                backoff = min(backoff * 2, 2.0)
        else:
            logger.error("store unavailable, batch of %d retained", count)
            return False

        self._seq[hour] = self._seq.get(hour, 0) + 1
        self.stats.files_written += 1
        self.stats.records_written += count
        self.probe("post_put")

        self.buffer.clear()
        self.buffer_opened_at = None
        self._commit_examined()
        return True

    def _commit_examined(self) -> None:
        for partition, offset in sorted(self.last_examined.items()):
            if offset > self.log.committed(self.group, self.topic, partition):
                self.log.commit(self.group, self.topic, partition, offset)
                self.stats.commits += 1
        self.probe("post_commit")

    # -- main loop -------------------------------------------------------------

    def _examine(self, record: LogRecord) -> None:
        self.stats.examined += 1
        self.last_examined[record.partition] = record.offset
        if classify(record.payload.decode("utf-8", errors="replace"), self.keywords):
            self.stats.matched += 1
            if not self.buffer:
                self.buffer_opened_at = self.clock()
            self.buffer.append(record)
            if len(self.buffer) >= self.flush_threshold:
                self._flush()
        self.probe("examined")

    def _deadline(self, last_tick: float) -> float:
        base = self.buffer_opened_at if self.buffer_opened_at is not None else last_tick
        return base + self.flush_interval

    def run(self) -> None:
        self.log.create_topic(self.topic)
        last_tick = self.clock()
        while not self._stop.is_set():
            records = self.log.fetch(self.group, self.topic, self.fetch_batch)
            for record in records:
                self._examine(record)
            now = self.clock()
            if now >= self._deadline(last_tick):
                if self.buffer:
                    self._flush()
                else:
                    self._commit_examined()
                last_tick = now
            if not records:
                self._stop.wait(0.02)
        # Graceful stop: flush whatever is buffered regardless of size.
        self._flush()
        self._commit_examined()
        logger.info("worker %s stopped: %s", self.event, self.stats.snapshot())


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="filterworker",
        description="Filter the raw topic for one event into batch files.",
    )
    parser.add_argument("--event", required=True)
    parser.add_argument("--keywords", required=True,
                        help="comma-separated keyword list")
    parser.add_argument("--log-root", required=True)
    parser.add_argument("--store-root", required=True)
    parser.add_argument("--flush-threshold", type=int, default=FLUSH_THRESHOLD)
    parser.add_argument("--flush-interval", type=float, default=FLUSH_INTERVAL)
    parser.add_argument("--topic", default="raw")
    parser.add_argument("--group", default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    keywords = [k.strip() for k in args.keywords.split(",") if k.strip()]
    log = CommitLog(args.log_root)
    store = ObjectStore(args.store_root)
    worker = FilterWorker(
        args.event, keywords, log, store,
        group=args.group, topic=args.topic,
        flush_threshold=args.flush_threshold,
        flush_interval=args.flush_interval,
    )

    def _shutdown(signum, frame):
        worker.stop()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    worker.run()
    log.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
