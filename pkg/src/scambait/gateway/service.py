"""Long-running service: mailbox polling, per-thread engines, timers, API.

The event log is the single source of truth; a restart replays every thread's
log and re-arms whatever the recovered status implies. All mutations funnel
through one lock, which trivially satisfies the per-thread write serialization
the engine requires.
"""

from __future__ import annotations

import logging
import threading
from datetime import datetime
from pathlib import Path

from .. import engagement as eng
from ..clock import Clock, RealClock, TimerHandle
from ..eventlog import EventLogStore
from ..mail import DsnStatus, MailMessage
from ..metrics import (
    Report,
    ThreadStats,
    aggregate_report,
    compute_thread_stats,
    export_timeline,
    report_csv,
    timeline_csv,
)
from ..reply_engine import (
    GuardPolicy,
    HttpGenerator,
    RefusalPatternFile,
    TemplateGenerator,
    scan_pii,
)
from ..runtime import ThreadRuntime
from ..triage import classify, load_denylist
from .config import ServiceConfig, save_engine_profile
from .mailbox import FileMailbox, MailboxAdapter, NetMailbox
from ..mail import MailboxFormat

logger = logging.getLogger(__name__)


class _LockingClock:
    """Clock proxy that runs timer callbacks under the service lock."""

    def __init__(self, inner: Clock, lock: threading.RLock):
        self._inner = inner
        self._lock = lock

    def now(self) -> datetime:
        return self._inner.now()

    def schedule(self, at, callback) -> TimerHandle:
        def locked(t):
            with self._lock:
                callback(t)

        return self._inner.schedule(at, locked)

    def cancel(self, handle: TimerHandle) -> None:
        self._inner.cancel(handle)


class UnknownThread(KeyError):
    pass


class UnknownDraft(KeyError):
    pass


class Service:
    def __init__(self, config: ServiceConfig, clock: Clock | None = None,
                 mailbox: MailboxAdapter | None = None):
        self.config = config
        self._lock = threading.RLock()
        self._base_clock = clock or RealClock()
        self.clock: Clock = _LockingClock(self._base_clock, self._lock)
        self.store = EventLogStore(config.data_dir)
        self.runtimes: dict[str, ThreadRuntime] = {}
        self.mailbox = mailbox if mailbox is not None else self._build_mailbox()
        self.generator = self._build_generator()
        self.denylist = load_denylist(config.denylist_path) if config.denylist_path else []
        self._refusal_file = (
            RefusalPatternFile(config.refusal_patterns_path)
            if config.refusal_patterns_path
            else None
        )
        self._poll_thread: threading.Thread | None = None
        self._stop_event = threading.Event()
        self._api_server = None
        self._sends_today: tuple[str, int] = ("", 0)

    # -- construction ------------------------------------------------------

    def _build_mailbox(self) -> MailboxAdapter | None:
        mb = self.config.mailbox
        if mb.kind == "none":
            return None
        if mb.kind == "file":
            fmt = MailboxFormat.MAILDIR if mb.format == "maildir" else MailboxFormat.MBOX
            outbox = Path(mb.outbox) if mb.outbox else self.config.data_dir / "outbox"
            return FileMailbox(mb.path or None, fmt, self.config.data_dir / "mailbox.cursor", outbox)
        return NetMailbox(
            imap_host=mb.imap_host,
            imap_port=mb.imap_port,
            username=mb.imap_username,
            password_env=mb.imap_password_env,
            smtp_host=mb.smtp_host,
            smtp_port=mb.smtp_port,
            folder=mb.folder,
        )

    def _build_generator(self):
        gen = self.config.generator
        if gen.kind == "http":
            return HttpGenerator(
                endpoint_url=gen.endpoint_url,
                model=gen.model,
                auth_env_var=gen.auth_env_var or None,
                timeout=gen.timeout,
            )
        return TemplateGenerator(gen.seed)

    def _guard_policy(self) -> GuardPolicy:
        base = self.config.guard
        if self._refusal_file is None:
            return base
        return GuardPolicy(
            max_attempts=base.max_attempts,
            refusal_patterns=self._refusal_file.patterns(),
            include_history=base.include_history,
        )

    def _may_send(self, at: datetime) -> bool:
        day = at.strftime("%Y-%m-%d")
        current_day, count = self._sends_today
        if current_day != day:
            return True
        return count < self.config.send_rate_limit_per_day

    def _note_send(self, at: datetime) -> None:
        day = at.strftime("%Y-%m-%d")
        current_day, count = self._sends_today
        self._sends_today = (day, count + 1 if current_day == day else 1)

    def _make_runtime(self, thread_key: str) -> ThreadRuntime:
        def send(outbound: MailMessage) -> DsnStatus | None:
            if self.mailbox is None:
                raise RuntimeError("no mailbox configured; cannot send")
            result = self.mailbox.send(outbound)
            self._note_send(outbound.timestamp)
            return result

        return ThreadRuntime(
            thread_key=thread_key,
            config=self.config.engine_config(),
            clock=self.clock,
            generator=self.generator,
            guard_policy=self._guard_policy,
            signature=self.config.signature,
            our_address=self.config.our_address,
            triage=lambda m: classify(m, self.denylist),
            send=send,
            append=self.store.append,
            may_send=self._may_send,
        )

    # -- lifecycle -----------------------------------------------------------

    def load_existing(self) -> None:
        with self._lock:
            for key in self.store.thread_keys():
                runtime = self._make_runtime(key)
                runtime.load(self.store.read(key))
                self.runtimes[key] = runtime

    def recover(self) -> None:
        with self._lock:
            for runtime in self.runtimes.values():
                runtime.recover()

    def start(self) -> None:
        save_engine_profile(self.config.data_dir, self.config.engine_config())
        self.load_existing()
        if isinstance(self._base_clock, RealClock):
            self._base_clock.start()
        self.recover()
        if self.mailbox is not None:
            self._stop_event.clear()
            self._poll_thread = threading.Thread(target=self._poll_loop, daemon=True,
                                                 name="scambait-poller")
            self._poll_thread.start()

    def stop(self) -> None:
        self._stop_event.set()
        if self._poll_thread is not None:
            self._poll_thread.join(timeout=10)
            self._poll_thread = None
        if isinstance(self._base_clock, RealClock):
            self._base_clock.stop()

    def _poll_loop(self) -> None:
        while not self._stop_event.is_set():
            try:
                self.poll_once()
            except Exception as exc:
                logger.error("mailbox poll failed: %s", exc)
            self._stop_event.wait(self.config.poll_interval)

    def poll_once(self) -> int:
        """Fetch and dispatch inbound mail; returns how many were handled."""
        if self.mailbox is None:
            return 0
        messages = self.mailbox.fetch_new()
        for msg in messages:
            self.handle_inbound(msg)
        return len(messages)

    # -- inbound dispatch ------------------------------------------------------

    def handle_inbound(self, msg: MailMessage) -> None:
        with self._lock:
            key = msg.thread_key
            if not key:
                logger.warning("dropping message %s without a thread key", msg.id)
                return
            runtime = self.runtimes.get(key)
            if msg.delivery_status is not None:
                if runtime is None:
                    logger.warning("DSN for unknown thread %s", key)
                    return
                runtime.deliver_dsn(msg.delivery_status)
                return
            if runtime is None:
                decision = eng.admit(msg, self.config.window, self.clock.now())
                if decision is not eng.AdmitDecision.ADMIT:
                    logger.info("rejecting out-of-window first contact from %s", key)
                    return
                runtime = self._make_runtime(key)
                self.runtimes[key] = runtime
            runtime.deliver_inbound(msg)

    # -- API surface -------------------------------------------------------------

    def thread_summaries(self) -> list[dict]:
        with self._lock:
            return [self._summary(rt) for rt in self.runtimes.values()]

    @staticmethod
    def _summary(runtime: ThreadRuntime) -> dict:
        data = runtime.state.to_dict()
        data["attention"] = runtime.attention
        return data

    def thread_detail(self, key: str) -> dict:
        with self._lock:
            runtime = self.runtimes.get(key)
            if runtime is None:
                raise UnknownThread(key)
            stats = None
            if runtime.thread.messages:
                stats = _stats_dict(compute_thread_stats(runtime.thread, runtime.state))
            return {"state": self._summary(runtime), "stats": stats}

    def thread_events(self, key: str) -> list[dict]:
        with self._lock:
            if key not in self.runtimes:
                raise UnknownThread(key)
        events = self.store.read(key)
        return [
            {"seq": e.seq, "at": e.at.isoformat(), "kind": e.kind.value, "payload": dict(e.payload)}
            for e in events
        ]

    def queue_items(self) -> list[dict]:
        with self._lock:
            items = []
            now = self.clock.now()
            for runtime in self.runtimes.values():
                if runtime.state.status is eng.Status.AWAITING_APPROVAL and runtime.draft_meta:
                    latest = runtime.thread.latest_inbound()
                    age_s = (now - runtime.state.last_event_at).total_seconds() if runtime.state.last_event_at else 0
                    items.append(
                        {
                            "draft_id": runtime.draft_meta.get("draft_id", ""),
                            "thread_key": runtime.thread_key,
                            "scammer_text": latest.body_text if latest else "",
                            "body": runtime.state.draft_body,
                            "attempts": runtime.draft_meta.get("attempts", 1),
                            "findings_history": runtime.draft_meta.get("findings_history", []),
                            "age_seconds": max(0.0, age_s),
                        }
                    )
                elif runtime.attention:
                    items.append(
                        {
                            "draft_id": "",
                            "thread_key": runtime.thread_key,
                            "scammer_text": "",
                            "body": None,
                            "attempts": 0,
                            "findings_history": [],
                            "age_seconds": 0.0,
                            "attention": runtime.attention,
                        }
                    )
            return items

    def _find_draft(self, draft_id: str) -> ThreadRuntime:
        for runtime in self.runtimes.values():
            if runtime.draft_meta.get("draft_id") == draft_id:
                return runtime
        raise UnknownDraft(draft_id)

    def approve_draft(self, draft_id: str) -> dict:
        with self._lock:
            runtime = self._find_draft(draft_id)
            if runtime.state.status is not eng.Status.AWAITING_APPROVAL:
                raise eng.IllegalTransition("draft is not awaiting approval")
            runtime.approve(self.clock.now())
            return self._summary(runtime)

    def edit_draft(self, draft_id: str, body: str) -> dict:
        """Re-scan the edited body; a PII finding rejects the edit outright."""
        with self._lock:
            runtime = self._find_draft(draft_id)
            if runtime.state.status is not eng.Status.AWAITING_APPROVAL:
                raise eng.IllegalTransition("draft is not awaiting approval")
            findings = scan_pii(body)
            if findings:
                return {"rejected": True, "findings": [f.to_dict() for f in findings]}
            runtime.edit_draft(body, self.clock.now())
            return {"rejected": False, "state": self._summary(runtime)}

    def reject_draft(self, draft_id: str) -> dict:
        with self._lock:
            runtime = self._find_draft(draft_id)
            if runtime.state.status is not eng.Status.AWAITING_APPROVAL:
                raise eng.IllegalTransition("draft is not awaiting approval")
            runtime.reject_draft(self.clock.now())
            return self._summary(runtime)

    def stop_thread(self, key: str) -> dict:
        with self._lock:
            runtime = self.runtimes.get(key)
            if runtime is None:
                raise UnknownThread(key)
            runtime.stop(self.clock.now())
            return self._summary(runtime)

    def report(self) -> Report:
        with self._lock:
            stats = [
                compute_thread_stats(rt.thread, rt.state)
                for rt in self.runtimes.values()
                if rt.thread.messages
            ]
        return aggregate_report(stats)

    def report_csv(self) -> str:
        return report_csv(self.report())

    def timeline_csv(self) -> str:
        with self._lock:
            pairs = [(rt.thread, rt.state) for rt in self.runtimes.values() if rt.thread.messages]
        return timeline_csv(export_timeline(pairs))


def _stats_dict(stats: ThreadStats) -> dict:
    return {
        "thread_key": stats.thread_key,
        "total_mails": stats.total_mails,
        "scammer": {
            "message_count": stats.scammer.message_count,
            "avg_chars": stats.scammer.avg_chars,
            "avg_sentences": stats.scammer.avg_sentences,
        },
        "ours": {
            "message_count": stats.ours.message_count,
            "avg_chars": stats.ours.avg_chars,
            "avg_sentences": stats.ours.avg_sentences,
        },
        "engagement_days": stats.engagement_days,
        "first_reply_delay_s": (
            stats.first_reply_delay.total_seconds() if stats.first_reply_delay else None
        ),
        "termination": stats.termination.value if stats.termination else None,
        "dsn": str(stats.dsn) if stats.dsn else None,
        "first_contact_at": stats.first_contact_at.isoformat() if stats.first_contact_at else None,
    }
