"""Generator determinism and connector session behavior."""

import hashlib
import json
import threading
import time
from datetime import datetime, timezone

import pytest

from crisisdesk.commitlog import CommitLog
from crisisdesk.streamgen import (
    Connector,
    ReplaySource,
    SyntheticSource,
    generate,
    load_config,
    main,
    make_source,
    parse_twitter_timestamp,
    twitter_timestamp,
)

VOCAB = ["flood", "earthquake", "wildfire", "hurricane", "rescue"]


def test_generate_is_deterministic():
    a = list(generate(seed=42, rate=10, duration=5, vocabulary=VOCAB))
    b = list(generate(seed=42, rate=10, duration=5, vocabulary=VOCAB))
    assert a == b


def test_generate_seeds_differ():
    a = list(generate(seed=1, rate=10, duration=2, vocabulary=VOCAB))
    b = list(generate(seed=2, rate=10, duration=2, vocabulary=VOCAB))
    assert a != b


def test_generate_count_is_rate_times_duration():
    msgs = list(generate(seed=0, rate=57, duration=60, vocabulary=VOCAB))
    assert len(msgs) == 3420


def test_generate_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        list(generate(seed=0, rate=0, duration=10, vocabulary=VOCAB))


def test_messages_carry_required_fields_and_unique_ids():
    msgs = list(generate(seed=3, rate=50, duration=10, vocabulary=VOCAB))
    ids = set()
    for raw in msgs:
        doc = json.loads(raw)
        assert doc["id_str"] == str(doc["id"])
        assert doc["text"]
        assert doc["user"]["screen_name"]
        parse_twitter_timestamp(doc["created_at"])
        ids.add(doc["id_str"])
    assert len(ids) == len(msgs)


def test_created_at_advances_with_virtual_clock():
    msgs = list(generate(seed=0, rate=1, duration=5, vocabulary=VOCAB))
    stamps = [parse_twitter_timestamp(json.loads(m)["created_at"]) for m in msgs]
    assert stamps == sorted(stamps)
    assert (stamps[-1] - stamps[0]).total_seconds() == 4


def test_keywords_appear_case_insensitively():
    msgs = list(generate(seed=5, rate=100, duration=5, vocabulary=["flood"]))
    hits = sum("flood" in m.casefold() for m in msgs)
    assert hits == len(msgs)  # single-keyword vocabulary lands in every text
    exact = sum("flood" in m for m in msgs)
    assert 0 < exact < len(msgs)  # casing actually varies


def test_empty_vocabulary_means_no_tracked_keywords():
    msgs = list(generate(seed=5, rate=100, duration=5, vocabulary=[]))
    for m in msgs:
        low = json.loads(m)["text"].casefold()
        assert not any(k in low for k in VOCAB)


def test_about_thirty_percent_carry_mention_entities():
    msgs = list(generate(seed=7, rate=100, duration=20, vocabulary=VOCAB))
    with_entities = sum(
        1 for m in msgs
        if json.loads(m).get("entities", {}).get("user_mentions")
    )
    assert 0.2 <= with_entities / len(msgs) <= 0.4


def test_some_mentions_lack_entity_records():
    msgs = list(generate(seed=7, rate=100, duration=20, vocabulary=VOCAB))
    bare = 0
    for m in msgs:
        doc = json.loads(m)
        if "@" in doc["text"] and "user_mentions" not in doc.get("entities", {}):
            bare += 1
    assert bare > 0


def test_twitter_timestamp_roundtrip():
    moment = datetime(2023, 9, 1, 23, 59, 59, tzinfo=timezone.utc)
    assert parse_twitter_timestamp(twitter_timestamp(moment)) == moment


def test_replay_source_resumes_across_sessions(tmp_path):
    path = tmp_path / "rec.jsonl"
    path.write_text("".join(f'{{"n": {i}}}\n' for i in range(10)))
    src = ReplaySource(path)
    first = src.open(())
    got = [json.loads(p)["n"] for _, p in (next(first) for _ in range(4))]
    assert got == [0, 1, 2, 3]
    second = src.open(())
    rest = [json.loads(p)["n"] for _, p in second]
    assert rest == [4, 5, 6, 7, 8, 9]


def test_make_source_parses_specs(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text("{}\n")
    assert isinstance(make_source("synthetic"), SyntheticSource)
    assert isinstance(make_source(f"replay:{path}"), ReplaySource)
    with pytest.raises(ValueError):
        make_source("kafka")


def _write_config(path, version, keywords):
    path.write_text(json.dumps({"version": version, "keywords": keywords}))


def _run_connector(connector, duration):
    t = threading.Thread(target=connector.run)
    t.start()
    time.sleep(duration)
    connector.stop()
    t.join(timeout=10)
    assert not t.is_alive()


def test_empty_keyword_set_idles(tmp_path):
    cfg = tmp_path / "keywords.json"
    _write_config(cfg, 1, [])
    log = CommitLog(tmp_path / "log")
    connector = Connector(SyntheticSource(seed=0), cfg, log, poll_interval=0.05)
    _run_connector(connector, 0.3)
    assert connector.stats.appended == 0
    assert connector.stats.sessions == 0
    assert log.end_offset("raw", 0) == 0
    log.close()


def test_replay_appends_every_line_in_order(tmp_path):
    lines = list(generate(seed=11, rate=100, duration=10, vocabulary=VOCAB))
    path = tmp_path / "rec.jsonl"
    path.write_text("".join(line + "\n" for line in lines))
    cfg = tmp_path / "keywords.json"
    _write_config(cfg, 1, ["flood"])
    log = CommitLog(tmp_path / "log")
    connector = Connector(ReplaySource(path), cfg, log, poll_interval=0.05)
    _run_connector(connector, 1.0)
    records = log.fetch("check", "raw", max_records=10_000)
    assert [r.payload.decode() for r in records] == lines
    assert connector.stats.appended == len(lines)
    assert connector.stats.dropped == 0
    log.close()


def test_payload_hashes_survive_transit(tmp_path):
    # Byte-for-byte fidelity, including non-ascii text.
    lines = list(generate(seed=13, rate=100, duration=5, vocabulary=VOCAB))
    assert any(ord(c) > 127 for line in lines for c in line)
    path = tmp_path / "rec.jsonl"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    cfg = tmp_path / "keywords.json"
    _write_config(cfg, 1, ["flood"])
    log = CommitLog(tmp_path / "log")
    connector = Connector(ReplaySource(path), cfg, log, poll_interval=0.05)
    _run_connector(connector, 1.0)
    records = log.fetch("check", "raw", max_records=10_000)
    source_hashes = [hashlib.sha256(line.encode("utf-8")).hexdigest() for line in lines]
    log_hashes = [hashlib.sha256(r.payload).hexdigest() for r in records]
    assert log_hashes == source_hashes
    log.close()


def test_config_version_change_restarts_session(tmp_path):
    cfg = tmp_path / "keywords.json"
    _write_config(cfg, 1, ["flood"])
    log = CommitLog(tmp_path / "log")
    connector = Connector(SyntheticSource(seed=0), cfg, log, poll_interval=0.05)
    t = threading.Thread(target=connector.run)
    t.start()
    time.sleep(0.3)
    before_change = connector.stats.appended
    _write_config(cfg, 2, ["earthquake"])
    time.sleep(0.4)
    connector.stop()
    t.join(timeout=10)

    assert before_change > 0
    assert connector.stats.sessions == 2
    assert connector.stats.restarts == 1
    records = log.fetch("check", "raw", max_records=1_000_000)
    texts = [json.loads(r.payload)["text"].casefold() for r in records]
    tail = texts[-50:]
    assert any("earthquake" in t for t in tail)
    assert not any("earthquake" in t for t in texts[:before_change])
    log.close()


def test_same_version_rewrite_does_not_restart(tmp_path):
    cfg = tmp_path / "keywords.json"
    _write_config(cfg, 1, ["flood"])
    log = CommitLog(tmp_path / "log")
    connector = Connector(SyntheticSource(seed=0), cfg, log, poll_interval=0.05)
    t = threading.Thread(target=connector.run)
    t.start()
    time.sleep(0.2)
    _write_config(cfg, 1, ["flood"])  # touch without version bump
    time.sleep(0.2)
    connector.stop()
    t.join(timeout=10)
    assert connector.stats.sessions == 1
    assert connector.stats.restarts == 0
    log.close()


def test_append_failures_are_bounded_and_counted(tmp_path):
    class FlakyLog:
        def __init__(self):
            self.attempts = 0

        def create_topic(self, topic):
            pass

        def append(self, topic, payload, fsync=True):
            self.attempts += 1
            raise OSError("disk gone")

    cfg = tmp_path / "keywords.json"
    _write_config(cfg, 1, ["flood"])
    flaky = FlakyLog()
    connector = Connector(
        SyntheticSource(seed=0), cfg, flaky, poll_interval=0.05,
        retry_attempts=3, retry_backoff=0.01,
    )
    t = threading.Thread(target=connector.run)
    t.start()
    time.sleep(0.3)
    connector.stop()
    t.join(timeout=10)
    assert connector.stats.dropped > 0
    assert connector.stats.appended == 0
    assert flaky.attempts >= 3 * connector.stats.dropped


def test_load_config_dedups_and_drops_blank(tmp_path):
    path = tmp_path / "k.json"
    path.write_text(json.dumps({"version": 4, "keywords": ["b", "a", "b", ""]}))
    cfg = load_config(path)
    assert cfg.version == 4
    assert cfg.keywords == ("b", "a")


def test_cli_generate_is_reproducible(tmp_path):
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("flood\nrescue\n")
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    argv = ["generate", "--seed", "9", "--rate", "20", "--duration", "5",
            "--vocab", str(vocab)]
    assert main(argv + ["--out", str(out1)]) == 0
    assert main(argv + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert len(out1.read_text().splitlines()) == 100
