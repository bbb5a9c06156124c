"""Filter worker: classification, batching, commit causality, crash recovery."""

import gzip
import json
import signal
import subprocess
import sys
import threading
import time

import pytest
from hypothesis import given, strategies as st

from crisisdesk.commitlog import CommitLog
from crisisdesk.filterworker import FilterWorker, classify
from crisisdesk.objectstore import ObjectStore, batch_key, hour_bucket, parse_batch_key
from crisisdesk.streamgen import generate

from oracles import batch_line_counts, classify_oracle, read_batches

VOCAB = ["flood", "earthquake", "wildfire", "hurricane", "rescue"]


# -- classify -----------------------------------------------------------------


def test_classify_plain_hit():
    assert classify('{"text": "Boulder flood rising"}', ["flood"])


def test_classify_hits_inside_screen_name():
    assert classify('{"user": {"screen_name": "floodwatch"}}', ["flood"])


def test_classify_miss():
    assert not classify('{"text": "sunny day"}', ["#fire"])


def test_classify_is_case_insensitive():
    assert classify('{"text": "FLOOD WARNING"}', ["flood"])
    assert classify('{"text": "flood"}', ["FLOOD"])


def test_classify_searches_malformed_json():
    assert classify('{"text": "flood...', ["flood"])


@given(
    payload=st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126),
                    max_size=200),
    keywords=st.lists(
        st.text(alphabet="abcdefghijKLMNOP#@ ", min_size=1, max_size=8),
        min_size=1, max_size=4,
    ),
)
def test_classify_agrees_with_regex_oracle(payload, keywords):
    assert classify(payload, keywords) == classify_oracle(payload, keywords)


# -- worker harness -----------------------------------------------------------


def _fill_log(tmp_path, n, seed=0, vocabulary=VOCAB):
    log = CommitLog(tmp_path / "log")
    payloads = list(generate(seed=seed, rate=100, duration=n / 100, vocabulary=vocabulary))
    log.append_many("raw", [p.encode() for p in payloads])
    return log, payloads


def _run_until(worker, predicate, timeout=30.0):
    error = []

    def runner():
        try:
            worker.run()
        except Exception as exc:  # noqa: BLE001 - surfaced to the test
            error.append(exc)

    thread = threading.Thread(target=runner)
    thread.start()
    deadline = time.monotonic() + timeout
    satisfied = False
    while time.monotonic() < deadline and thread.is_alive():
        if predicate(worker):
            satisfied = True
            break
        time.sleep(0.01)
    worker.stop()
    thread.join(timeout=30)
    assert not thread.is_alive()
    if not satisfied and not predicate(worker):
        raise AssertionError(f"worker never reached condition (errors: {error})")
    return error


def test_graceful_run_matches_oracle_exactly(tmp_path):
    log, payloads = _fill_log(tmp_path, 800, seed=21)
    store = ObjectStore(tmp_path / "store")
    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=100)
    errors = _run_until(worker, lambda w: w.stats.examined >= len(payloads))
    assert not errors

    expected = [p for p in payloads if classify_oracle(p, ["flood"])]
    stored = read_batches(store, "flood")
    assert stored == expected
    assert worker.stats.matched == len(expected)
    for key, claimed, actual in batch_line_counts(store, "flood"):
        assert claimed == actual
        assert actual <= 100
    log.close()


def test_threshold_splits_2500_into_1000_1000_500(tmp_path):
    payloads = [json.dumps({"id_str": str(i), "text": f"flood tweet {i}"})
                for i in range(2500)]
    log = CommitLog(tmp_path / "log")
    log.append_many("raw", [p.encode() for p in payloads])
    store = ObjectStore(tmp_path / "store")
    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=1000)
    _run_until(worker, lambda w: w.stats.examined >= 2500)

    counts = [parse_batch_key(k)[3] for k in store.list("events/flood/tweets-")]
    assert counts == [1000, 1000, 500]
    assert read_batches(store, "flood") == payloads
    log.close()


def test_zero_matches_writes_nothing_but_commits_at_tick(tmp_path):
    log, payloads = _fill_log(tmp_path, 100, seed=3)
    store = ObjectStore(tmp_path / "store")
    worker = FilterWorker("quiet", ["zzznothing"], log, store,
                          flush_threshold=1000, flush_interval=0.1)
    _run_until(
        worker,
        lambda w: log.committed(w.group, "raw", 0) == len(payloads) - 1,
    )
    assert store.list("events/quiet/") == []
    assert log.committed(worker.group, "raw", 0) == len(payloads) - 1
    log.close()


def test_interval_flush_fires_without_threshold(tmp_path):
    log, payloads = _fill_log(tmp_path, 50, seed=4)
    store = ObjectStore(tmp_path / "store")
    worker = FilterWorker("flood", ["flood"], log, store,
                          flush_threshold=100_000, flush_interval=0.2)
    _run_until(worker, lambda w: w.stats.files_written >= 1, timeout=15)
    # The file appeared because of buffer age, not because of stop.
    assert worker.stats.files_written >= 1
    log.close()


def test_commit_never_precedes_durable_store(tmp_path):
    # Observed at every commit point: everything matched up to the committed
    # offset must already be readable from the store.
    log, payloads = _fill_log(tmp_path, 600, seed=5)
    store = ObjectStore(tmp_path / "store")
    violations = []

    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=50)

    def probe(stage):
        if stage != "post_commit":
            return
        committed = log.committed(worker.group, "raw", 0)
        stored = set(read_batches(store, "flood"))
        for i, p in enumerate(payloads[: committed + 1]):
            if classify_oracle(p, ["flood"]) and p not in stored:
                violations.append((committed, i))

    worker.probe = probe
    _run_until(worker, lambda w: w.stats.examined >= len(payloads))
    assert not violations
    log.close()


def test_buffer_bounded_by_threshold(tmp_path):
    log, payloads = _fill_log(tmp_path, 400, seed=6)
    store = ObjectStore(tmp_path / "store")
    high_water = []

    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=25)
    worker.probe = lambda stage: high_water.append(len(worker.buffer))
    _run_until(worker, lambda w: w.stats.examined >= len(payloads))
    assert max(high_water) <= 25
    log.close()


def test_store_failure_retains_batch_and_blocks_commit(tmp_path):
    class FlakyStore(ObjectStore):
        def __init__(self, root):
            super().__init__(root)
            self.failures_left = 2

        def put(self, key, content):
            if self.failures_left > 0:
                self.failures_left -= 1
                raise OSError("store down")
            return super().put(key, content)

    payloads = [json.dumps({"id_str": str(i), "text": f"flood {i}"}) for i in range(30)]
    log = CommitLog(tmp_path / "log")
    log.append_many("raw", [p.encode() for p in payloads])
    store = FlakyStore(tmp_path / "store")
    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=10)
    _run_until(worker, lambda w: w.stats.files_written >= 3)

    assert worker.stats.put_retries >= 2
    assert read_batches(store, "flood") == payloads
    assert log.committed(worker.group, "raw", 0) == 29
    log.close()


def test_crash_between_put_and_commit_duplicates_but_never_loses(tmp_path):
    log, payloads = _fill_log(tmp_path, 500, seed=7)
    store = ObjectStore(tmp_path / "store")
    expected = [p for p in payloads if classify_oracle(p, ["flood"])]
    assert len(expected) > 150

    class CrashNow(Exception):
        pass

    crashes = []

    def crash_probe(stage):
        if stage == "post_put" and not crashes:
            crashes.append(1)
            raise CrashNow()

    first = FilterWorker("flood", ["flood"], log, store,
                         flush_threshold=50, probe=crash_probe)
    caught = []

    def runner():
        try:
            first.run()
        except CrashNow:
            caught.append(True)

    thread = threading.Thread(target=runner)
    thread.start()
    thread.join(timeout=30)
    assert caught == [True]
    assert log.committed(first.group, "raw", 0) == -1  # crashed pre-commit

    # A process restart means a fresh log handle: the dead worker's
    # in-memory fetch position must not leak into the next incarnation.
    log.close()
    log = CommitLog(tmp_path / "log")
    second = FilterWorker("flood", ["flood"], log, store, flush_threshold=50)
    _run_until(second, lambda w: w.stats.examined >= len(payloads))

    stored = read_batches(store, "flood")
    # No loss: every matched payload occurs at least as often as in the oracle.
    assert sorted(stored) != sorted(expected) or len(stored) == len(expected)
    for p in expected:
        assert stored.count(p) >= expected.count(p)
    # The crashed batch (50 records) is the only duplication.
    assert len(stored) == len(expected) + 50
    log.close()


def test_seq_resumes_after_existing_files(tmp_path):
    payloads = [json.dumps({"id_str": str(i), "text": f"flood {i}"}) for i in range(20)]
    log = CommitLog(tmp_path / "log")
    log.append_many("raw", [p.encode() for p in payloads])
    store = ObjectStore(tmp_path / "store")
    # Pre-seed seq 0 for any hour the flush could land in (boundary safe).
    now = log.fetch("peek", "raw", max_records=1)[0].appended_at
    for hour in {hour_bucket(now)}:
        store.put(batch_key("flood", hour, 0, 1), gzip.compress(b'{"x":1}\n'))

    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=1000)
    _run_until(worker, lambda w: w.stats.examined >= 20)
    new_keys = [k for k in store.list("events/flood/tweets-")
                if parse_batch_key(k)[3] == 20]
    assert len(new_keys) == 1
    assert parse_batch_key(new_keys[0])[2] == 1  # seq after the seeded file
    log.close()


def test_key_collision_bumps_seq(tmp_path):
    payloads = [json.dumps({"id_str": str(i), "text": f"flood {i}"}) for i in range(10)]
    log = CommitLog(tmp_path / "log")
    log.append_many("raw", [p.encode() for p in payloads])
    store = ObjectStore(tmp_path / "store")
    worker = FilterWorker("flood", ["flood"], log, store, flush_threshold=1000)
    # Collide after the worker scanned: it believes seq 0 is free.
    now = log.fetch("peek", "raw", max_records=1)[0].appended_at
    store.put(batch_key("flood", hour_bucket(now), 0, 10),
              gzip.compress(b'{"x":1}\n'))

    _run_until(worker, lambda w: w.stats.examined >= 10)
    stored = read_batches(store, "flood")
    assert payloads[0] in stored
    assert worker.stats.put_retries >= 1
    log.close()


def test_worker_requires_keywords_and_positive_threshold(tmp_path):
    log = CommitLog(tmp_path / "log")
    store = ObjectStore(tmp_path / "store")
    with pytest.raises(ValueError):
        FilterWorker("e", [], log, store)
    with pytest.raises(ValueError):
        FilterWorker("e", ["k"], log, store, flush_threshold=0)
    log.close()


def test_distinct_events_share_topic_under_distinct_groups(tmp_path):
    log, payloads = _fill_log(tmp_path, 300, seed=9)
    store = ObjectStore(tmp_path / "store")
    flood = FilterWorker("flood", ["flood"], log, store, flush_threshold=50)
    quake = FilterWorker("quake", ["earthquake"], log, store, flush_threshold=50)

    threads = [threading.Thread(target=flood.run), threading.Thread(target=quake.run)]
    for t in threads:
        t.start()
    deadline = time.monotonic() + 30
    while time.monotonic() < deadline:
        if flood.stats.examined >= 300 and quake.stats.examined >= 300:
            break
        time.sleep(0.01)
    flood.stop()
    quake.stop()
    for t in threads:
        t.join(timeout=30)

    assert read_batches(store, "flood") == [
        p for p in payloads if classify_oracle(p, ["flood"])]
    assert read_batches(store, "quake") == [
        p for p in payloads if classify_oracle(p, ["earthquake"])]
    log.close()


def test_cli_worker_processes_and_stops_on_sigterm(tmp_path):
    payloads = [json.dumps({"id_str": str(i), "text": f"flood {i}"}) for i in range(120)]
    log = CommitLog(tmp_path / "log")
    log.append_many("raw", [p.encode() for p in payloads])
    log.close()

    proc = subprocess.Popen(
        [sys.executable, "-m", "crisisdesk.filterworker",
         "--event", "flood", "--keywords", "flood,storm",
         "--log-root", str(tmp_path / "log"),
         "--store-root", str(tmp_path / "store"),
         "--flush-threshold", "50", "--flush-interval", "3600"],
        stderr=subprocess.PIPE,
    )
    store = ObjectStore(tmp_path / "store")
    deadline = time.monotonic() + 20
    while time.monotonic() < deadline:
        if sum(c for _, c, _ in batch_line_counts(store, "flood")) >= 100:
            break
        time.sleep(0.05)
    proc.send_signal(signal.SIGTERM)
    assert proc.wait(timeout=20) == 0
    assert read_batches(store, "flood") == payloads  # final flush drained the rest
