"""Top-level CLI: run the suite, rerun workflows, audit stored batches."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from .audit import audit_counts, find_duplicates
from .objectstore import ObjectStore


def _cmd_serve(args) -> int:
    from .commitlog import CommitLog
    from .streamgen import Connector, make_source
    from .suite import ServiceSuite

    suite = ServiceSuite(
        args.root, gateway_port=args.port,
        auth_disabled=args.auth_disabled,
        static_root=args.static_root,
        flush_threshold=args.flush_threshold,
        flush_interval=args.flush_interval,
    )
    suite.start()
    print(f"gateway listening on {suite.base_url}", flush=True)

    stop = threading.Event()
    connector = None
    connector_thread = None
    log = None
    if args.source:
        log = CommitLog(suite.log_root)
        connector = Connector(
            make_source(args.source, seed=args.seed, rate=args.rate),
            suite.config_path, log,
            realtime=args.realtime, rate=args.rate,
        )
        connector_thread = threading.Thread(
            target=connector.run, name="connector", daemon=True)
        connector_thread.start()
        print(f"connector running against {args.source}", flush=True)

    def _shutdown(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    while not stop.wait(0.5):
        pass

    if connector is not None:
        connector.stop()
        connector_thread.join(timeout=10)
        log.close()
    suite.stop()
    return 0


def _cmd_run_workflow(args) -> int:
    from .analysissvc import run_workflow

    store = ObjectStore(args.store_root)
    run = run_workflow(args.event, store, trigger="manual")
    print(json.dumps(run, indent=1))
    return 0 if all(j["status"] == "DONE" for j in run["jobs"]) else 1


def _cmd_audit(args) -> int:
    store = ObjectStore(args.store_root)
    mismatches = audit_counts(store, args.event)
    duplicates = find_duplicates(store, args.event)
    report = {
        "event": args.event,
        "count_mismatches": [vars(m) for m in mismatches],
        "duplicate_ids": duplicates,
    }
    print(json.dumps(report, indent=1))
    return 1 if mismatches else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="crisisdesk",
        description="Desk-scale disaster tweet collection and analysis suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run all services behind the gateway")
    serve.add_argument("--root", required=True, help="data root directory")
    serve.add_argument("--port", type=int, default=8000, help="gateway port")
    serve.add_argument("--auth-disabled", action="store_true")
    serve.add_argument("--static-root", default=None,
                       help="directory of dashboard assets to serve at /")
    serve.add_argument("--source", default=None,
                       help="also run a connector: synthetic or replay:FILE")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--rate", type=float, default=57.0)
    serve.add_argument("--realtime", action="store_true")
    serve.add_argument("--flush-threshold", type=int, default=1000)
    serve.add_argument("--flush-interval", type=float, default=3600.0)
    serve.set_defaults(func=_cmd_serve)

    wf = sub.add_parser("run-workflow", help="rerun analysis jobs for an event")
    wf.add_argument("--store-root", required=True)
    wf.add_argument("--event", required=True)
    wf.set_defaults(func=_cmd_run_workflow)

    audit = sub.add_parser("audit", help="check batch counts and duplicates")
    audit.add_argument("--store-root", required=True)
    audit.add_argument("--event", required=True)
    audit.set_defaults(func=_cmd_audit)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
