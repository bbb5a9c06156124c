"""Stream connector: feeds raw messages into the commit log.

Stands in for a Twitter Streaming API connector. Messages come from either a
deterministic synthetic generator or a replay of a recorded JSONL file. The
connector watches a keyword config file (JSON ``{"version": n, "keywords":
[...]}``) and restarts its source session whenever the version changes, the
way a real streaming connection must be re-established with a new track list.

The connector never parses, filters, or transforms payloads: whatever the
source yields is appended to the log byte-for-byte.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import random
import signal
import sys
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterator, Protocol

from .commitlog import CommitLog

logger = logging.getLogger(__name__)

DEFAULT_START = datetime(2023, 9, 1, 0, 0, 0, tzinfo=timezone.utc)
DEFAULT_RATE = 57.0  # messages per second
POLL_INTERVAL = 1.0  # seconds between config reads

_DAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
_MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
           "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")

_FILLER = (
    "the", "a", "to", "and", "of", "in", "for", "on", "with", "at", "from",
    "by", "about", "just", "now", "here", "near", "after", "latest", "update",
)
_NOUNS = (
    "road", "bridge", "crew", "shelter", "power", "water", "rain", "wind",
    "night", "city", "team", "alert", "zone", "map", "photo", "video", "help",
    "river", "county", "school",
)
_NAME_STEMS = (
    "storm", "river", "desk", "radio", "field", "watch", "local", "metro",
    "night", "signal", "relay", "scout", "pilot", "ridge", "delta", "nova",
)


def twitter_timestamp(moment: datetime) -> str:
    """Classic Twitter created_at, e.g. ``Fri Sep 01 12:00:00 +0000 2023``."""
    moment = moment.astimezone(timezone.utc)
    return (
        f"{_DAYS[moment.weekday()]} {_MONTHS[moment.month - 1]} "
        f"{moment.day:02d} {moment:%H:%M:%S} +0000 {moment.year}"
    )


def parse_twitter_timestamp(value: str) -> datetime:
    """Inverse of :func:`twitter_timestamp`; locale-independent."""
    _, mon, day, hms, _, year = value.split()
    h, m, s = hms.split(":")
    return datetime(
        int(year), _MONTHS.index(mon) + 1, int(day), int(h), int(m), int(s),
        tzinfo=timezone.utc,
    )


@dataclass(frozen=True)
class RawMessage:
    """A message as received: id assigned by the source, payload untouched."""

    id: str
    payload: str
    received_at: datetime


@dataclass(frozen=True)
class KeywordConfig:
    version: int
    keywords: tuple[str, ...]


def load_config(path: str | Path) -> KeywordConfig:
    doc = json.loads(Path(path).read_text())
    keywords = [k for k in doc.get("keywords", []) if isinstance(k, str) and k]
    # Dedup but keep file order; rank order matters for the synthetic source.
    return KeywordConfig(int(doc["version"]), tuple(dict.fromkeys(keywords)))


def load_vocabulary(path: str | Path) -> list[str]:
    lines = Path(path).read_text().splitlines()
    return [w.strip() for w in lines if w.strip()]


def _zipf_weights(n: int, s: float = 1.2) -> list[float]:
    return [1.0 / (rank + 1) ** s for rank in range(n)]


class _TweetFactory:
    """Deterministic synthetic tweet payloads.

    All randomness flows through one seeded Random consumed in index order,
    so a fixed (seed, vocabulary, rate) always yields identical bytes. The
    schema intentionally wobbles: extra fields come and go per message.
    """

    def __init__(self, seed: int, vocabulary: list[str],
                 rate: float = DEFAULT_RATE, start: datetime = DEFAULT_START):
        self.rng = random.Random(seed)
        self.vocabulary = list(dict.fromkeys(w for w in vocabulary if w))
        self.vocab_weights = _zipf_weights(len(self.vocabulary))
        self.rate = rate
        self.start = start
        self.names = []
        seen = set()
        while len(self.names) < 200:
            name = f"{self.rng.choice(_NAME_STEMS)}_{self.rng.randrange(1000)}"
            if name not in seen:
                seen.add(name)
                self.names.append(name)
        self.name_weights = _zipf_weights(len(self.names))

    def _vary_case(self, word: str) -> str:
        style = self.rng.randrange(4)
        if style == 0:
            return word.lower()
        if style == 1:
            return word.upper()
        if style == 2:
            return word.title()
        return "".join(
            c.upper() if self.rng.random() < 0.5 else c.lower() for c in word
        )

    def _pick_name(self) -> str:
        return self.rng.choices(self.names, weights=self.name_weights)[0]

    def make(self, index: int) -> str:
        rng = self.rng
        moment = self.start + timedelta(seconds=index / self.rate)
        tweet_id = 10 ** 18 + index * 4096 + rng.randrange(4096)
        author = self._pick_name()
        author_id = 10 ** 9 + self.names.index(author)

        words = rng.choices(_FILLER + _NOUNS, k=rng.randint(4, 9))
        if self.vocabulary:
            for kw in rng.choices(self.vocabulary, weights=self.vocab_weights,
                                  k=rng.randint(1, 3)):
                words.insert(rng.randrange(len(words) + 1), self._vary_case(kw))

        entities: dict = {"hashtags": [], "urls": []}
        roll = rng.random()
        if roll < 0.30:
            mention_names = {self._pick_name() for _ in range(rng.randint(1, 2))}
            entities["user_mentions"] = [
                {"screen_name": n, "id": 10 ** 9 + self.names.index(n),
                 "id_str": str(10 ** 9 + self.names.index(n))}
                for n in sorted(mention_names)
            ]
            for n in mention_names:
                words.insert(rng.randrange(len(words) + 1), f"@{n}")
        elif roll < 0.42:
            # Mention only in the text, no entity record.
            words.insert(rng.randrange(len(words) + 1), f"@{self._pick_name()}")

        if rng.random() < 0.25:
            tag = rng.choice(_NOUNS)
            entities["hashtags"].append({"text": tag})
            words.append(f"#{tag}")
        if rng.random() < 0.2:
            words.append(f"https://t.co/{rng.getrandbits(36):09x}")
        if rng.random() < 0.08:
            words.append(rng.choice(("🌊", "⚠️", "🚒", "📍")))

        doc: dict = {
            "created_at": twitter_timestamp(moment),
            "id": tweet_id,
            "id_str": str(tweet_id),
            "text": " ".join(words),
            "user": {
                "id": author_id,
                "id_str": str(author_id),
                "screen_name": author,
                "name": author.replace("_", " ").title(),
            },
            "entities": entities,
        }
        if rng.random() < 0.5:
            doc["lang"] = rng.choice(("en", "en", "en", "es", "de"))
        if rng.random() < 0.4:
            doc["retweet_count"] = rng.randrange(50)
        if rng.random() < 0.3:
            doc["source"] = rng.choice(
                ("web", "mobile", "tracker", "relay-app"))
        if rng.random() < 0.1:
            doc[f"x_{rng.getrandbits(20):05x}"] = rng.randrange(1000)
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def generate(seed: int, rate: float, duration: float,
             vocabulary: list[str], start: datetime = DEFAULT_START) -> Iterator[str]:
    """Yield exactly ``int(rate * duration)`` deterministic tweet payloads."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    factory = _TweetFactory(seed, vocabulary, rate=rate, start=start)
    for index in range(int(rate * duration)):
        yield factory.make(index)


class Source(Protocol):
    def open(self, keywords: tuple[str, ...]) -> Iterator[tuple[str, str]]:
        """Start a session; yields (message id, payload) pairs."""


class SyntheticSource:
    """Endless generated stream; session keywords become the vocabulary.

    The message index persists across sessions so ids stay unique and the
    virtual clock keeps advancing through restarts.
    """

    def __init__(self, seed: int = 0, rate: float = DEFAULT_RATE,
                 start: datetime = DEFAULT_START):
        self.seed = seed
        self.rate = rate
        self.start = start
        self._index = 0
        self._sessions = 0

    def open(self, keywords: tuple[str, ...]) -> Iterator[tuple[str, str]]:
        factory = _TweetFactory(
            self.seed + self._sessions, list(keywords),
            rate=self.rate, start=self.start,
        )
        self._sessions += 1
        while True:
            payload = factory.make(self._index)
            doc_id = json.loads(payload)["id_str"]
            self._index += 1
            yield doc_id, payload


class ReplaySource:
    """Replays a recorded JSONL file in order.

    The line position persists across sessions, so a config-driven restart
    resumes where the previous session stopped instead of re-emitting.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lineno = 0

    def open(self, keywords: tuple[str, ...]) -> Iterator[tuple[str, str]]:
        with open(self.path, encoding="utf-8") as fh:
            for line in itertools.islice(fh, self._lineno, None):
                line = line.rstrip("\n")
                if not line:
                    self._lineno += 1
                    continue
                self._lineno += 1
                yield str(self._lineno), line


@dataclass
class ConnectorStats:
    appended: int = 0
    dropped: int = 0
    sessions: int = 0
    restarts: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "appended": self.appended,
                "dropped": self.dropped,
                "sessions": self.sessions,
                "restarts": self.restarts,
            }


class Connector:
    """Pumps a source into a log topic under keyword-config control.

    A watcher thread re-reads the config file every ``poll_interval``
    seconds; the emitter compares versions between messages and swaps the
    session when the version moves. An empty keyword set means no session.
    Append failures are retried with backoff a bounded number of times, then
    the message is dropped and counted.
    """

    def __init__(self, source: Source, config_path: str | Path, log: CommitLog,
                 topic: str = "raw", poll_interval: float = POLL_INTERVAL,
                 realtime: bool = False, rate: float = DEFAULT_RATE,
                 retry_attempts: int = 5, retry_backoff: float = 0.05):
        self.source = source
        self.config_path = Path(config_path)
        self.log = log
        self.topic = topic
        self.poll_interval = poll_interval
        self.realtime = realtime
        self.rate = rate
        self.retry_attempts = retry_attempts
        self.retry_backoff = retry_backoff
        self.stats = ConnectorStats()
        self._stop = threading.Event()
        self._config_lock = threading.Lock()
        self._config: KeywordConfig | None = None

    def stop(self) -> None:
        self._stop.set()

    def _read_config(self) -> None:
        try:
            cfg = load_config(self.config_path)
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("config read failed, keeping last: %s", exc)
            return
        with self._config_lock:
            self._config = cfg

    def _current_config(self) -> KeywordConfig | None:
        with self._config_lock:
            return self._config

    def _watch_config(self) -> None:
        while not self._stop.is_set():
            self._read_config()
            self._stop.wait(self.poll_interval)

    def _append_with_retry(self, payload: bytes) -> bool:
        for attempt in range(self.retry_attempts):
            try:
                self.log.append(self.topic, payload)
                return True
            except Exception as exc:
                if attempt == self.retry_attempts - 1 or self._stop.is_set():
                    logger.error("append failed after %d attempts: %s",
                                 attempt + 1, exc)
                    break
                self._stop.wait(self.retry_backoff * (2 ** attempt))
        return False

    def run(self) -> None:
        self.log.create_topic(self.topic)
        self._read_config()
        watcher = threading.Thread(
            target=self._watch_config, name="config-watcher", daemon=True)
        watcher.start()

        session: Iterator[tuple[str, str]] | None = None
        session_version: int | None = None
        exhausted = False
        next_emit = time.monotonic()

        try:
            while not self._stop.is_set():
                cfg = self._current_config()
                if cfg is None:
                    self._stop.wait(0.05)
                    continue
                if cfg.version != session_version:
                    if session_version is not None:
                        self.stats.restarts += 1
                        logger.info("config version %s -> %s, restarting session",
                                    session_version, cfg.version)
                    session_version = cfg.version
                    exhausted = False
                    if cfg.keywords:
                        session = self.source.open(cfg.keywords)
                        self.stats.sessions += 1
                    else:
                        session = None
                if session is None or exhausted:
                    self._stop.wait(0.05)
                    continue

                try:
                    _, payload = next(session)
                except StopIteration:
                    exhausted = True
                    continue

                received = RawMessage(
                    id="", payload=payload,
                    received_at=datetime.now(timezone.utc),
                )
                if self._append_with_retry(received.payload.encode("utf-8")):
                    self.stats.appended += 1
                else:
                    self.stats.dropped += 1

                if self.realtime:
                    next_emit += 1.0 / self.rate
                    delay = next_emit - time.monotonic()
                    if delay > 0:
                        self._stop.wait(delay)
                    else:
                        next_emit = time.monotonic()
        finally:
            logger.info("connector stopped: %s", self.stats.snapshot())


def make_source(spec: str, seed: int = 0, rate: float = DEFAULT_RATE) -> Source:
    if spec == "synthetic":
        return SyntheticSource(seed=seed, rate=rate)
    if spec.startswith("replay:"):
        return ReplaySource(spec.split(":", 1)[1])
    raise ValueError(f"unknown source: {spec!r} (want synthetic or replay:FILE)")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="streamgen",
        description="Generate synthetic tweet streams or pump one into the log.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a deterministic JSONL corpus")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--rate", type=float, default=DEFAULT_RATE)
    gen.add_argument("--duration", type=float, default=60.0)
    gen.add_argument("--vocab", help="keyword file, one per line")
    gen.add_argument("--out", default="-", help="output path, - for stdout")

    con = sub.add_parser("connect", help="run the connector until interrupted")
    con.add_argument("--source", required=True,
                     help="synthetic or replay:FILE")
    con.add_argument("--config", required=True, help="keyword config JSON")
    con.add_argument("--log-root", required=True)
    con.add_argument("--topic", default="raw")
    con.add_argument("--seed", type=int, default=0)
    con.add_argument("--rate", type=float, default=DEFAULT_RATE)
    con.add_argument("--poll-interval", type=float, default=POLL_INTERVAL)
    con.add_argument("--realtime", action="store_true",
                     help="pace at --rate instead of running flat out")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    if args.command == "generate":
        vocabulary = load_vocabulary(args.vocab) if args.vocab else []
        out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
        try:
            for payload in generate(args.seed, args.rate, args.duration, vocabulary):
                out.write(payload + "\n")
        finally:
            if out is not sys.stdout:
                out.close()
        return 0

    source = make_source(args.source, seed=args.seed, rate=args.rate)
    log = CommitLog(args.log_root)
    connector = Connector(
        source, args.config, log, topic=args.topic,
        poll_interval=args.poll_interval, realtime=args.realtime,
        rate=args.rate,
    )

    def _shutdown(signum, frame):
        connector.stop()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    connector.run()
    log.close()
    print(json.dumps(connector.stats.snapshot()), file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
