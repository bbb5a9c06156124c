"""Index arithmetic against a decompress-everything oracle."""

import gzip
import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings, strategies as st

from crisisdesk.audit import audit_counts, find_duplicates
from crisisdesk.eventindex import build_index, histogram, locate, slice_index
from crisisdesk.objectstore import ObjectStore, batch_key

from oracles import paginate_oracle

H0 = datetime(2023, 9, 1, 0, tzinfo=timezone.utc)


def _hour(i):
    return H0 + timedelta(hours=i)


def _store_with(tmp_path, batches):
    """batches: list of (hour index, seq, records list)."""
    store = ObjectStore(tmp_path / "store")
    for hour_i, seq, records in batches:
        body = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)
        store.put(
            batch_key("ev", _hour(hour_i), seq, len(records)),
            gzip.compress(body.encode()),
        )
    return store


def _records(n, start=0):
    return [{"id_str": str(start + i), "text": f"t{start + i}"} for i in range(n)]


def test_empty_event_gives_empty_index(tmp_path):
    store = ObjectStore(tmp_path / "store")
    index = build_index(store, "ev")
    assert index.total == 0
    assert index.entries == ()
    assert locate(index, 0, 10) == []
    assert histogram(index) == {}


def test_cum_starts_are_prefix_sums(tmp_path):
    store = _store_with(tmp_path, [
        (0, 0, _records(1000)),
        (1, 0, _records(437, 1000)),
        (2, 0, _records(1000, 1437)),
    ])
    index = build_index(store, "ev")
    assert [e.cum_start for e in index.entries] == [0, 1000, 1437]
    assert index.total == 2437


def test_entries_sorted_by_hour_then_seq(tmp_path):
    store = _store_with(tmp_path, [
        (1, 1, _records(5)),
        (0, 0, _records(3)),
        (1, 0, _records(2)),
    ])
    index = build_index(store, "ev")
    assert [(e.hour, e.seq) for e in index.entries] == [
        (_hour(0), 0), (_hour(1), 0), (_hour(1), 1)]


def test_unparseable_keys_are_skipped(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(4))])
    store.put("events/ev/tweets-garbage.jsonl.gz", gzip.compress(b"{}\n"))
    index = build_index(store, "ev")
    assert index.total == 4
    assert len(index.entries) == 1


def test_locate_specific_page_inside_second_file(tmp_path):
    store = _store_with(tmp_path, [
        (0, 0, _records(1000)),
        (1, 0, _records(437, 1000)),
        (2, 0, _records(1000, 1437)),
    ])
    index = build_index(store, "ev")
    spans = locate(index, 4, 250)
    assert spans == [(index.entries[1].key, 0, 250)]


def test_locate_page_spanning_two_files(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(1000)), (1, 0, _records(437, 1000))])
    index = build_index(store, "ev")
    spans = locate(index, 1, 600)
    assert spans == [
        (index.entries[0].key, 600, 1000),
        (index.entries[1].key, 0, 200),
    ]


def test_locate_past_end_is_empty(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(10))])
    index = build_index(store, "ev")
    assert locate(index, 1, 10) == []
    assert locate(index, 50, 10) == []


def test_locate_rejects_bad_arguments(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(10))])
    index = build_index(store, "ev")
    with pytest.raises(ValueError):
        locate(index, 0, 0)
    with pytest.raises(ValueError):
        locate(index, -1, 10)


def test_full_range_slice_is_identity(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(5)), (3, 0, _records(7, 5))])
    index = build_index(store, "ev")
    sliced = slice_index(index, since=_hour(0), until=_hour(3))
    assert sliced.entries == index.entries
    assert sliced.total == index.total


def test_disjoint_slice_is_empty(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(5))])
    index = build_index(store, "ev")
    sliced = slice_index(index, since=_hour(5), until=_hour(9))
    assert sliced.total == 0
    assert sliced.entries == ()


def test_slice_bounds_are_inclusive_and_recompute_offsets(tmp_path):
    store = _store_with(tmp_path, [
        (0, 0, _records(5)),
        (1, 0, _records(6, 5)),
        (2, 0, _records(7, 11)),
    ])
    index = build_index(store, "ev")
    sliced = slice_index(index, since=_hour(1), until=_hour(2))
    assert [e.hour for e in sliced.entries] == [_hour(1), _hour(2)]
    assert [e.cum_start for e in sliced.entries] == [0, 6]
    assert sliced.total == 13


def test_histogram_sums_per_hour(tmp_path):
    store = _store_with(tmp_path, [
        (5, 0, _records(1000)),
        (5, 1, _records(200, 1000)),
        (6, 0, _records(50, 1200)),
    ])
    index = build_index(store, "ev")
    assert histogram(index) == {_hour(5): 1200, _hour(6): 50}


def test_histogram_opens_no_objects(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(10)), (1, 0, _records(3, 10))])
    before = store.stats.gets
    index = build_index(store, "ev")
    h = histogram(index)
    assert store.stats.gets == before
    assert sum(h.values()) == index.total


# -- randomized agreement with the brute-force oracle -------------------------


@st.composite
def corpora(draw):
    n_files = draw(st.integers(min_value=0, max_value=12))
    batches = []
    seqs: dict[int, int] = {}
    start = 0
    for _ in range(n_files):
        hour_i = draw(st.integers(min_value=0, max_value=5))
        seq = seqs.get(hour_i, 0)
        seqs[hour_i] = seq + 1
        count = draw(st.integers(min_value=1, max_value=40))
        batches.append((hour_i, seq, count, start))
        start += count
    return batches


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_locate_matches_brute_force(tmp_path_factory, data):
    batches = data.draw(corpora())
    store = ObjectStore(tmp_path_factory.mktemp("s"))
    # (hour, seq) sorted order defines the oracle's concatenation order.
    all_records = []
    for hour_i, seq, count, start in sorted(batches, key=lambda b: (b[0], b[1])):
        records = _records(count, start)
        all_records.extend(records)
        body = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)
        store.put(batch_key("ev", _hour(hour_i), seq, count),
                  gzip.compress(body.encode()))

    index = build_index(store, "ev")
    page_size = data.draw(st.integers(min_value=1, max_value=50))
    page = data.draw(st.integers(min_value=0, max_value=6))

    got = []
    for key, first, stop in locate(index, page, page_size):
        body = gzip.decompress(store.get(key)).decode()
        lines = body.splitlines()
        got.extend(json.loads(line) for line in lines[first:stop])
    assert got == paginate_oracle(all_records, page, page_size)


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_slice_then_locate_matches_filter_then_paginate(tmp_path_factory, data):
    batches = data.draw(corpora())
    store = ObjectStore(tmp_path_factory.mktemp("s"))
    by_hour: dict[int, list] = {}
    for hour_i, seq, count, start in sorted(batches, key=lambda b: (b[0], b[1])):
        records = _records(count, start)
        by_hour.setdefault(hour_i, []).extend(records)
        body = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)
        store.put(batch_key("ev", _hour(hour_i), seq, count),
                  gzip.compress(body.encode()))

    since_i = data.draw(st.integers(min_value=0, max_value=5))
    until_i = data.draw(st.integers(min_value=since_i, max_value=5))
    page_size = data.draw(st.integers(min_value=1, max_value=30))
    page = data.draw(st.integers(min_value=0, max_value=4))

    index = slice_index(build_index(store, "ev"),
                        since=_hour(since_i), until=_hour(until_i))
    got = []
    for key, first, stop in locate(index, page, page_size):
        lines = gzip.decompress(store.get(key)).decode().splitlines()
        got.extend(json.loads(line) for line in lines[first:stop])

    in_range = [r for h in range(since_i, until_i + 1) for r in by_hour.get(h, [])]
    assert got == paginate_oracle(in_range, page, page_size)
    assert sum(histogram(index).values()) == index.total == len(in_range)


# -- audits -------------------------------------------------------------------


def test_audit_counts_flags_drift(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(5))])
    body = "".join(json.dumps(r) + "\n" for r in _records(3, 100))
    store.put(batch_key("ev", _hour(1), 0, 99), gzip.compress(body.encode()))
    mismatches = audit_counts(store, "ev")
    assert len(mismatches) == 1
    assert mismatches[0].claimed == 99
    assert mismatches[0].actual == 3


def test_find_duplicates_reports_multiplicity(tmp_path):
    store = _store_with(tmp_path, [
        (0, 0, _records(4)),
        (0, 1, _records(2)),  # ids 0 and 1 again
    ])
    dupes = find_duplicates(store, "ev")
    assert dupes == {"0": 2, "1": 2}


def test_find_duplicates_clean_corpus(tmp_path):
    store = _store_with(tmp_path, [(0, 0, _records(4)), (1, 0, _records(4, 4))])
    assert find_duplicates(store, "ev") == {}
