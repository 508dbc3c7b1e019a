"""Command line interface.

Exit codes: 0 success, 1 input error, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from ..engagement import IllegalTransition, OutOfOrderEvent
from ..eventlog import CorruptLog, EventLogStore
from ..mail import Direction, MailboxFormat, MailError, ingest_mailbox, parse_rfc822
from ..metrics import aggregate_report, compute_thread_stats, export_timeline, render_table, report_csv, timeline_csv
from ..runtime import rebuild
from ..simulator import run_simulation
from ..triage import classify, load_denylist
from .config import ConfigError, load_config, load_engine_profile, save_engine_profile

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scambait",
                                     description="Bait mail scammers into pointless conversations")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a mailbox and print triage verdicts")
    p.add_argument("path")
    p.add_argument("--format", choices=["mbox", "maildir"], required=True)
    p.add_argument("--denylist", help="brand denylist file")

    p = sub.add_parser("triage", help="triage one message (rfc822 file or plain text)")
    p.add_argument("file")
    p.add_argument("--denylist", help="brand denylist file")

    p = sub.add_parser("simulate", help="run the scammer simulation from a config file")
    p.add_argument("config")

    p = sub.add_parser("report", help="volume statistics table from a data dir")
    p.add_argument("data_dir")

    p = sub.add_parser("timeline", help="timeline CSV from a data dir")
    p.add_argument("data_dir")

    p = sub.add_parser("serve", help="run the engagement service")
    p.add_argument("config")
    return parser


def _load_denylist_arg(path: str | None) -> list[str]:
    if not path:
        return []
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"denylist file not found: {path}")
    return load_denylist(p)


def cmd_ingest(args) -> int:
    try:
        denylist = _load_denylist_arg(args.denylist)
        fmt = MailboxFormat.MBOX if args.format == "mbox" else MailboxFormat.MAILDIR
        result = ingest_mailbox(args.path, fmt)
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for msg in result.messages:
        verdict = classify(msg, denylist)
        print(json.dumps({
            "id": msg.id,
            "from": msg.from_addr,
            "subject": msg.subject,
            "eligible": verdict.eligible,
            "reasons": [r.value for r in verdict.reasons],
        }))
    for diag in result.diagnostics:
        print(f"warning: {diag.entry}: {diag.error}", file=sys.stderr)
    return EXIT_OK


def cmd_triage(args) -> int:
    path = Path(args.file)
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return EXIT_INPUT
    try:
        denylist = _load_denylist_arg(args.denylist)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    raw = path.read_bytes()
    try:
        msg = parse_rfc822(raw)
    except MailError:
        # Not an rfc822 file: treat the whole content as a plain-text body.
        from datetime import datetime, timezone
        from ..mail import MailMessage

        msg = MailMessage(
            id=f"file:{path.name}",
            thread_key="",
            direction=Direction.INBOUND,
            from_addr="unknown@example.invalid",
            to_addr="",
            subject="",
            timestamp=datetime.now(timezone.utc),
            body_text=raw.decode("utf-8", errors="replace"),
        )
    verdict = classify(msg, denylist)
    print(json.dumps(verdict.to_dict()))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .scenario import build_sim_config

    try:
        config = load_config(args.config)
        sim_config = build_sim_config(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_simulation(sim_config)

    store = EventLogStore(config.data_dir)
    for key, events in result.logs.items():
        path = store.path_for(key)
        if path.exists():
            print(f"error: refusing to overwrite existing log {path}", file=sys.stderr)
            return EXIT_INPUT
        for event in events:
            store.append(key, event)
    from ..engagement import EngineConfig

    default_engine = EngineConfig(
        window=sim_config.window,
        delay=sim_config.delay,
        silence_timeout=sim_config.silence_timeout,
        seed=sim_config.seed,
    )
    save_engine_profile(config.data_dir, default_engine, result.engine_configs)

    report = aggregate_report(result.stats)
    (config.data_dir / "report.csv").write_text(report_csv(report), encoding="utf-8")
    (config.data_dir / "timeline.csv").write_text(timeline_csv(result.timeline), encoding="utf-8")
    print(f"simulated {len(result.logs)} threads into {config.data_dir}")
    return EXIT_OK


def _load_data_dir(data_dir: str):
    root = Path(data_dir)
    if not root.exists():
        raise FileNotFoundError(f"data dir not found: {root}")
    store = EventLogStore(root)
    keys = store.thread_keys()
    if keys:
        default, overrides = load_engine_profile(root)
    else:
        default, overrides = None, {}
    pairs = []
    for key in keys:
        events = store.read(key)
        config = overrides.get(key, default)
        pairs.append(rebuild(key, events, config))
    return pairs


def cmd_report(args) -> int:
    try:
        pairs = _load_data_dir(args.data_dir)
    except (FileNotFoundError, CorruptLog, OutOfOrderEvent, IllegalTransition) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stats = [compute_thread_stats(t, s) for t, s in pairs if t.messages]
    report = aggregate_report(stats)
    sys.stdout.write(render_table(report))
    csv_path = Path(args.data_dir) / "report.csv"
    csv_path.write_text(report_csv(report), encoding="utf-8")
    return EXIT_OK


def cmd_timeline(args) -> int:
    try:
        pairs = _load_data_dir(args.data_dir)
    except (FileNotFoundError, CorruptLog, OutOfOrderEvent, IllegalTransition) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    events = export_timeline([(t, s) for t, s in pairs if t.messages])
    sys.stdout.write(timeline_csv(events))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .api import ApiServer
    from .service import Service

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    service = Service(config)
    service.start()
    api = ApiServer(service)
    api.start()
    host, port = api.address
    print(f"scambait service on http://{host}:{port} (data dir {config.data_dir})", flush=True)

    stop = threading.Event()

    def _shutdown(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, _shutdown)
    signal.signal(signal.SIGTERM, _shutdown)
    try:
        while not stop.wait(0.5):
            pass
    finally:
        api.stop()
        service.stop()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handlers = {
        "ingest": cmd_ingest,
        "triage": cmd_triage,
        "simulate": cmd_simulate,
        "report": cmd_report,
        "timeline": cmd_timeline,
        "serve": cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
