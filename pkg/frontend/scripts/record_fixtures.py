"""Record gateway responses as JSON fixtures for the dashboard tests.

Boots the whole backend on a scratch directory, seeds a deterministic
store corpus, drives the same requests the dashboard issues, and saves
each response under tests/fixtures/. Rerun after changing an API shape:

    python3 scripts/record_fixtures.py
"""
import gzip
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import httpx

os.environ["EPIC_AUTH_SECRET"] = "fixture-recorder-secret"
os.environ["EPIC_AUTH_ADMINS"] = "ana"

from crisisdesk.eventsvc import tag_color
from crisisdesk.objectstore import ObjectStore, batch_key
from crisisdesk.streamgen import _TweetFactory
from crisisdesk.suite import ServiceSuite

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

COLOR_TAGS = [
    "urgent", "verified", "needs-review", "rumor", "official",
    "rescue", "damage", "shelter", "volunteer", "medical",
    "power outage", "road closed", "UPPER", "MiXeD CaSe", "two words",
    "dash-tag", "under_score", "dot.tag", "a", "zz",
    "inondation", "überflutung", "洪水", "наводнение", "🌊",
    "🚨 alert", "café", "naïve", "Straße", "tags with  spaces",
    "0", "42", "tag:colon", "tag/slash", "tag(paren)",
    "really-long-tag-name-that-keeps-going-for-a-while", "x" * 60, "!?", "@handle", "#hashtag",
]


def seed_store(store_root: Path, event: str) -> None:
    """Deterministic batches: 3 hours x 2 files, 20 tweets per file."""
    store = ObjectStore(store_root)
    factory = _TweetFactory(seed=7, vocabulary=["flood", "rain", "levee"])
    index = 0
    for hour_offset in range(3):
        hour = datetime(2023, 9, 1, 10 + hour_offset, tzinfo=timezone.utc)
        for seq in range(2):
            lines = []
            for _ in range(20):
                lines.append(factory.make(index))
                index += 1
            body = gzip.compress(("\n".join(lines) + "\n").encode("utf-8"))
            store.put(batch_key(event, hour, seq, len(lines)), body)


def save(name: str, status: int, body, text: str | None = None) -> None:
    record = {"status": status, "body": body}
    if text is not None:
        record["text"] = text
    path = FIXTURES / f"{name}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"  {name}.json  (status {status})")


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as scratch:
        suite = ServiceSuite(scratch, flush_threshold=10)
        with suite:
            base = suite.base_url
            http = httpx.Client(base_url=base, timeout=30.0)

            login = http.post("/auth/token", json={"user": "ana"})
            token = login.json()["token"]
            auth = {"Authorization": f"Bearer {token}"}
            http.post("/auth/token", json={"user": "blake"})

            created = http.post("/events/", headers=auth, json={
                "name": "flood",
                "display_name": "River flood",
                "keywords": ["flood", "rain", "levee"],
            })
            assert created.status_code == 201, created.text
            quake = http.post("/events/", headers=auth, json={
                "name": "quake",
                "display_name": "Quake drill",
                "keywords": ["earthquake", "tremor"],
            })
            assert quake.status_code == 201, quake.text
            stopped = http.patch("/events/quake", headers=auth,
                                 json={"status": "STOPPED"})
            assert stopped.status_code == 200, stopped.text

            seed_store(suite.store_root, "flood")

            r = http.get("/events/")
            save("events", r.status_code, r.json())

            r = http.get("/tweets/flood/",
                         params={"page": 0, "page_size": 10, "refresh": True})
            save("tweets_page", r.status_code, r.json())

            r = http.get("/tweets/flood/", params={
                "page": 0, "page_size": 10,
                "since": "2023090111", "until": "2023090111",
            })
            save("tweets_sliced", r.status_code, r.json())

            r = http.get("/tweets/flood/histogram")
            save("histogram", r.status_code, r.json())

            first = http.get("/tweets/flood/",
                             params={"page": 0, "page_size": 1}).json()
            row = first["tweets"][0]
            tweet_id = row["tweet"]["id_str"]
            r = http.get("/tweets/flood/detail",
                         params={"file": row["file"], "tweet_id": tweet_id})
            save("detail", r.status_code,
                 {"file": row["file"], "tweet_id": tweet_id}, text=r.text)

            for tag in ("urgent", "verified", "🌊 flood"):
                r = http.post("/events/flood/annotations/", headers=auth,
                              json={"tweet_id": tweet_id, "tag": tag})
                assert r.status_code == 201, r.text
            r = http.get("/events/flood/annotations/")
            save("annotations", r.status_code, r.json())

            r = http.post("/filter/flood/", headers=auth,
                          json={"pattern": "flood"})
            save("job", r.status_code, r.json())
            job_id = r.json()["job_id"]
            r = http.get(f"/filter/flood/results/{job_id}",
                         params={"page": 0, "page_size": 10})
            save("results", r.status_code, r.json())

            r = http.post("/filter/flood/", headers=auth,
                          json={"pattern": "zz-absent-zz"})
            save("job_empty", r.status_code, r.json())

            r = http.post("/filter/flood/export", headers=auth, json={
                "fields": ["id_str", "created_at", "user.screen_name", "text"],
                "pattern": "flood",
            })
            save("export", r.status_code, r.json())

            r = http.get("/mentions/flood/")
            save("mentions_pending", r.status_code, r.json())

            r = http.post("/workflows/flood/run", headers=auth)
            assert r.status_code == 200, r.text
            r = http.get("/mentions/flood/",
                         params={"page": 0, "page_size": 10})
            save("mentions", r.status_code, r.json())

            r = http.get("/users/", headers=auth)
            save("users", r.status_code, r.json())

            colors = {tag: tag_color(tag) for tag in COLOR_TAGS}
            save("tag_colors", 200, colors)

    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
