"""Search jobs: substring scan, stable result pages, TTL expiry, CSV export."""

import csv
import gzip
import io
import json

import pytest
from fastapi.testclient import TestClient

from crisisdesk.authsvc import ACCESS_CLAIM, AuthSettings, sign_token
from crisisdesk.objectstore import ObjectStore, batch_key, str_to_hour
from crisisdesk.querysvc import (
    GoneError,
    QueryService,
    QueryValidationError,
    UnknownEventError,
    create_app,
    extract_path,
)

from oracles import classify_oracle, extract_path_oracle, paginate_oracle, read_batches


class FakeClock:
    def __init__(self, start=0.0):
        self.now = start

    def __call__(self):
        return self.now


def _write_batch(store, event, hour, seq, lines):
    body = b"".join(line.encode() + b"\n" for line in lines)
    store.put(batch_key(event, str_to_hour(str(hour)), seq, len(lines)),
              gzip.compress(body))


def _corpus_lines():
    lines = []
    for i in range(90):
        text = f"Flood waters rising near bridge {i}" if i % 3 == 0 else \
            f"quiet afternoon update {i} @vol{i % 7}"
        lines.append(json.dumps({
            "id": 10 ** 18 + i, "id_str": str(10 ** 18 + i),
            "created_at": "Fri Sep 01 12:00:00 +0000 2023",
            "text": text,
            "user": {"screen_name": f"reporter{i % 11}"},
        }))
    return lines


@pytest.fixture
def rig(tmp_path):
    store = ObjectStore(tmp_path / "store")
    lines = _corpus_lines()
    _write_batch(store, "flood", 2023090112, 0, lines[:40])
    _write_batch(store, "flood", 2023090113, 0, lines[40:90])
    clock = FakeClock()
    service = QueryService(store, tmp_path / "work", ttl=1800.0, clock=clock)
    return store, service, clock, lines


def test_query_rows_match_oracle(rig):
    store, service, _, _ = rig
    job = service.submit_query("flood", "BRIDGE")
    want = [line for line in read_batches(store, "flood")
            if classify_oracle(line, ["bridge"])]
    assert job.row_count == len(want) == 30

    got = service.get_results(job.id, 0, 1000)["rows"]
    assert [row["tweet_id"] for row in got] == \
        [json.loads(line)["id_str"] for line in want]
    assert [row["text"] for row in got] == \
        [json.loads(line)["text"] for line in want]
    for row in got:
        assert set(row) == {
            "tweet_id", "created_at", "screen_name", "text", "source_file"}
        assert row["source_file"].startswith("events/flood/")


def test_query_scan_order_follows_listing(rig):
    store, service, _, _ = rig
    job = service.submit_query("flood", "update")
    rows = service.get_results(job.id, 0, 1000)["rows"]
    files = [row["source_file"] for row in rows]
    assert files == sorted(files)


def test_mention_pattern_queries(rig):
    store, service, _, _ = rig
    job = service.submit_query("flood", "@vol3")
    want = [line for line in read_batches(store, "flood")
            if classify_oracle(line, ["@vol3"])]
    assert job.row_count == len(want) > 0


def test_query_validation_and_unknowns(rig):
    _, service, _, _ = rig
    with pytest.raises(QueryValidationError):
        service.submit_query("flood", "")
    with pytest.raises(UnknownEventError):
        service.submit_query("ghost", "flood")
    job = service.submit_query("flood", "zz-no-such-token")
    assert job.row_count == 0
    assert service.get_results(job.id, 0, 50)["rows"] == []


def test_result_pages_are_stable_and_match_oracle(rig):
    _, service, _, _ = rig
    job = service.submit_query("flood", "update")
    all_rows = service.get_results(job.id, 0, 1000)["rows"]
    assert len(all_rows) == job.row_count

    for page_size in (7, 25, 60):
        pages = []
        total_pages = (len(all_rows) + page_size - 1) // page_size
        for page in range(total_pages):
            body = service.get_results(job.id, page, page_size)
            assert body["rows"] == paginate_oracle(all_rows, page, page_size)
            pages.append(body["rows"])
        # Re-reading a page yields identical bytes.
        again = service.get_results(job.id, 0, page_size)
        assert json.dumps(again["rows"]) == json.dumps(pages[0])

    with pytest.raises(QueryValidationError):
        service.get_results(job.id, -1, 50)
    with pytest.raises(QueryValidationError):
        service.get_results(job.id, 0, 0)
    with pytest.raises(QueryValidationError):
        service.get_results(job.id, 0, 1001)


def test_jobs_expire_after_ttl(rig):
    _, service, clock, _ = rig
    job = service.submit_query("flood", "update")
    clock.now = 1799.0
    assert service.get_results(job.id, 0, 10)["rows"]
    clock.now = 1800.0
    with pytest.raises(GoneError):
        service.get_results(job.id, 0, 10)
    assert not job.path.exists()  # table removed with the job
    with pytest.raises(GoneError):
        service.get_results("never-was", 0, 10)


def test_gc_collects_expired_tables(rig):
    _, service, clock, _ = rig
    keep = service.submit_query("flood", "update")
    clock.now = 2000.0
    gone = service.submit_query("flood", "bridge")
    assert service.gc() == 1
    assert not keep.path.exists()
    assert gone.path.exists()
    assert service.get_results(gone.id, 0, 10)["job_id"] == gone.id


# -- CSV export -------------------------------------------------------------------


def test_export_matches_field_oracle(rig):
    store, service, _, _ = rig
    fields = ["id_str", "user.screen_name", "text", "user.missing"]
    key, rows = service.export_csv("flood", fields)
    assert key.startswith("exports/flood/search-")
    assert key.endswith(".csv")

    parsed = list(csv.reader(io.StringIO(store.get(key).decode("utf-8"))))
    assert parsed[0] == fields
    body_lines = read_batches(store, "flood")
    assert rows == len(body_lines)
    assert len(parsed) == rows + 1
    for got, line in zip(parsed[1:], body_lines):
        doc = json.loads(line)
        for cell, field in zip(got, fields):
            want = extract_path_oracle(doc, field)
            if want is None:
                assert cell == ""
            elif isinstance(want, str):
                assert cell == want
            else:
                assert cell == json.dumps(want, separators=(",", ":"),
                                          ensure_ascii=False)


def test_export_quotes_awkward_payloads(tmp_path):
    store = ObjectStore(tmp_path / "store")
    nasty = [
        json.dumps({"id_str": "1", "text": 'He said "run", then\nleft',
                    "user": {"screen_name": "a,b"}}),
        json.dumps({"id_str": "2", "text": "plain", "user": {"screen_name": "c"}}),
        json.dumps({"id_str": "3", "text": "trailing,comma,", "user": {}}),
    ]
    _write_batch(store, "quirk", 2023090101, 0, nasty)
    service = QueryService(store, tmp_path / "work")
    key, rows = service.export_csv("quirk", ["id_str", "text", "user.screen_name"])
    assert rows == 3

    raw = store.get(key).decode("utf-8")
    assert "\r\n" in raw  # RFC 4180 line endings
    parsed = list(csv.reader(io.StringIO(raw)))
    assert parsed[1] == ["1", 'He said "run", then\nleft', "a,b"]
    assert parsed[2] == ["2", "plain", "c"]
    assert parsed[3] == ["3", "trailing,comma,", ""]


def test_export_encodes_non_string_values_as_json(tmp_path):
    store = ObjectStore(tmp_path / "store")
    _write_batch(store, "typed", 2023090101, 0, [json.dumps({
        "id": 42, "flag": True, "nested": {"a": [1, 2]}, "nothing": None})])
    service = QueryService(store, tmp_path / "work")
    key, _ = service.export_csv("typed", ["id", "flag", "nested", "nothing"])
    parsed = list(csv.reader(io.StringIO(store.get(key).decode("utf-8"))))
    assert parsed[1] == ["42", "true", '{"a":[1,2]}', ""]


def test_export_with_pattern_filters_rows(rig):
    store, service, _, _ = rig
    key, rows = service.export_csv("flood", ["id_str"], pattern="bridge")
    want = [line for line in read_batches(store, "flood")
            if classify_oracle(line, ["bridge"])]
    assert rows == len(want)


def test_export_validation(rig):
    _, service, _, _ = rig
    with pytest.raises(QueryValidationError):
        service.export_csv("flood", [])
    with pytest.raises(QueryValidationError):
        service.export_csv("flood", ["  ", ""])
    with pytest.raises(UnknownEventError):
        service.export_csv("ghost", ["id_str"])


def test_extract_path_walks_nested_dicts():
    doc = {"user": {"name": "ana", "meta": {"lang": "es"}}, "id": 3}
    assert extract_path(doc, "user.name") == "ana"
    assert extract_path(doc, "user.meta.lang") == "es"
    assert extract_path(doc, "id") == 3
    assert extract_path(doc, "user.absent") is None
    assert extract_path(doc, "user.name.deeper") is None


# -- HTTP shell -------------------------------------------------------------------


SECRET = "query-secret"


def test_routes_flow(rig, tmp_path):
    app = create_app(tmp_path / "store", tmp_path / "http-work",
                     settings=AuthSettings(secret=SECRET, disabled=True),
                     gc_interval=3600.0)
    with TestClient(app) as client:
        submit = client.post("/filter/flood/", json={"pattern": "bridge"})
        assert submit.status_code == 201
        job = submit.json()
        assert job["row_count"] == 30

        page = client.get(
            f"/filter/flood/results/{job['job_id']}?page=0&page_size=10")
        assert page.status_code == 200
        assert len(page.json()["rows"]) == 10

        # A results URL under the wrong event does not leak the table.
        wrong = client.get(f"/filter/other/results/{job['job_id']}")
        assert wrong.status_code == 404

        assert client.post(
            "/filter/ghost/", json={"pattern": "x"}).status_code == 404
        assert client.post(
            "/filter/flood/", json={"pattern": ""}).status_code == 422
        assert client.get(
            f"/filter/flood/results/{job['job_id']}?page_size=5000"
        ).status_code == 422
        assert client.get(
            "/filter/flood/results/no-such-job").status_code == 410

        export = client.post("/filter/flood/export", json={
            "fields": ["id_str", "text"], "pattern": "bridge"})
        assert export.status_code == 201
        assert export.json()["rows"] == 30
        assert export.json()["csv_key"].startswith("exports/flood/")


def test_routes_guarded_when_auth_enabled(rig, tmp_path):
    app = create_app(tmp_path / "store", tmp_path / "http-work",
                     settings=AuthSettings(secret=SECRET, disabled=False),
                     gc_interval=3600.0)
    with TestClient(app) as client:
        assert client.post(
            "/filter/flood/", json={"pattern": "x"}).status_code == 401
        assert client.post(
            "/filter/flood/export", json={"fields": ["id"]}).status_code == 401

        token = sign_token(SECRET, "ana", {ACCESS_CLAIM: True})
        headers = {"Authorization": f"Bearer {token}"}
        submit = client.post("/filter/flood/", json={"pattern": "bridge"},
                             headers=headers)
        assert submit.status_code == 201
        # Reading results back needs no token.
        job_id = submit.json()["job_id"]
        assert client.get(f"/filter/flood/results/{job_id}").status_code == 200
