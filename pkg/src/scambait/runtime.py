"""Thread runtime: applies events to the state machine and executes effects.

One runtime instance owns one thread. Events are validated through `step`
before being persisted, so the log is always a legal prefix; both the
simulator (virtual clock) and the live service (real clock) drive this same
code path.
"""

from __future__ import annotations

import hashlib
import logging
from datetime import datetime
from typing import Callable

from . import engagement as eng
from .clock import Clock, TimerHandle
from .mail import (
    Direction,
    DsnStatus,
    MailMessage,
    Thread,
    message_from_dict,
    message_to_dict,
    render_reply,
)
from .reply_engine import (
    Generator,
    GeneratorError,
    GuardPolicy,
    GuardrailExhausted,
    generate_reply,
)
from .triage import TriageVerdict

logger = logging.getLogger(__name__)


def draft_id_for(thread_key: str, seq: int) -> str:
    return hashlib.sha1(f"{thread_key}:{seq}".encode("utf-8")).hexdigest()[:12]


def rebuild(
    thread_key: str,
    events: list[eng.EngagementEvent],
    config: eng.EngineConfig,
) -> tuple[Thread, eng.ThreadState]:
    """Reconstruct the conversation and its state from a persisted event log."""
    thread = Thread(thread_key)
    state = eng.initial_state(thread_key)
    for event in events:
        state, _ = eng.step(state, event, config)
        if event.kind is eng.EventKind.INBOUND_RECEIVED:
            thread.add(message_from_dict(event.payload["message"]))
        elif event.kind is eng.EventKind.SENT and not event.payload.get("retry", False):
            thread.add(message_from_dict(event.payload["message"]))
    return thread, state


class ThreadRuntime:
    """Event-sourced driver for a single conversation."""

    def __init__(
        self,
        thread_key: str,
        config: eng.EngineConfig,
        clock: Clock,
        generator: Generator,
        guard_policy: GuardPolicy | Callable[[], GuardPolicy],
        signature: str,
        our_address: str,
        triage: Callable[[MailMessage], TriageVerdict],
        send: Callable[[MailMessage], DsnStatus | None],
        append: Callable[[str, eng.EngagementEvent], None],
        subject: str = "Re: your message",
        may_send: Callable[[datetime], bool] | None = None,
    ):
        self.thread_key = thread_key
        self.config = config
        self.clock = clock
        self.generator = generator
        self.guard_policy = guard_policy
        self.signature = signature
        self.our_address = our_address
        self.triage = triage
        self.send = send
        self.append = append
        self.subject = subject
        self.may_send = may_send or (lambda at: True)

        self.state = eng.initial_state(thread_key)
        self.thread = Thread(thread_key)
        self.attention: str | None = None
        self.draft_meta: dict = {}
        self._send_timer: TimerHandle | None = None
        self._silence_timer: TimerHandle | None = None

    # -- loading ---------------------------------------------------------

    def load(self, events: list[eng.EngagementEvent]) -> None:
        """Rebuild state and message history from a persisted log."""
        for event in events:
            state, _ = eng.step(self.state, event, self.config)
            self._absorb(event)
            self.state = state

    def recover(self) -> None:
        """Re-arm whatever the loaded status implies (timers, pending drafts)."""
        status = self.state.status
        now = self.clock.now()
        if status is eng.Status.SCHEDULED and self.state.send_at is not None:
            self._arm_send_timer(max(self.state.send_at, now))
        elif status is eng.Status.AWAITING_SCAMMER:
            since = self.state.awaiting_since or now
            self._arm_silence_timer(since + self.config.silence_timeout)
        elif status is eng.Status.DRAFT_PENDING:
            self._run_generate(now)

    # -- inbound surface ---------------------------------------------------

    def deliver_inbound(self, msg: MailMessage) -> None:
        self._cancel_silence_timer()
        # Event time is arrival time, never the (attacker-controlled) Date header.
        at = self._monotone_now()
        self._apply(eng.EventKind.INBOUND_RECEIVED, at, {"message": message_to_dict(msg)})

    def deliver_dsn(self, status: DsnStatus, at: datetime | None = None) -> None:
        self._cancel_silence_timer()
        at = at if at is not None else self._monotone_now()
        self._apply(eng.EventKind.DSN_RECEIVED, at, {"status": str(status)})
        if self.state.status is eng.Status.AWAITING_SCAMMER:
            # e.g. a 2.x.x delivery confirmation: keep the original silence deadline
            since = self.state.awaiting_since or at
            self._arm_silence_timer(since + self.config.silence_timeout)

    def _monotone_now(self) -> datetime:
        now = self.clock.now()
        if self.state.last_event_at is not None and now < self.state.last_event_at:
            now = self.state.last_event_at
        return now

    def stop(self, at: datetime, reason: eng.TerminationReason = eng.TerminationReason.MANUAL_STOP) -> None:
        if self.state.status is eng.Status.TERMINATED:
            raise eng.IllegalTransition(f"thread {self.thread_key} already terminated")
        self._apply(eng.EventKind.TERMINATED_EVENT, at, {"reason": reason.value})

    def approve(self, at: datetime) -> None:
        self._apply(eng.EventKind.APPROVED, at, {"decision": "approve"})

    def edit_draft(self, body: str, at: datetime) -> None:
        self._apply(eng.EventKind.APPROVED, at, {"decision": "edit", "body": body})

    def reject_draft(self, at: datetime) -> None:
        self._apply(eng.EventKind.APPROVED, at, {"decision": "reject"})

    # -- internals ---------------------------------------------------------

    def _absorb(self, event: eng.EngagementEvent) -> None:
        """Side-structures that mirror the event log (message history, drafts)."""
        if event.kind is eng.EventKind.INBOUND_RECEIVED:
            self.thread.add(message_from_dict(event.payload["message"]))
        elif event.kind is eng.EventKind.SENT and not event.payload.get("retry", False):
            self.thread.add(message_from_dict(event.payload["message"]))
        elif event.kind is eng.EventKind.DRAFT_READY:
            self.draft_meta = dict(event.payload)
            self.attention = None
        elif event.kind is eng.EventKind.APPROVED and event.payload.get("decision") == "edit":
            self.draft_meta = dict(self.draft_meta, body=event.payload["body"], edited=True)

    def _apply(self, kind: eng.EventKind, at: datetime, payload: dict) -> None:
        event = eng.EngagementEvent(self.state.last_seq + 1, at, kind, payload)
        state, effects = eng.step(self.state, event, self.config)
        self.append(self.thread_key, event)
        self._absorb(event)
        self.state = state
        for effect in effects:
            self._execute(effect, at)

    def _execute(self, effect: eng.Effect, at: datetime) -> None:
        if isinstance(effect, eng.RunTriage):
            latest = self.thread.latest_inbound()
            if latest is not None:
                verdict = self.triage(latest)
                self._apply(eng.EventKind.TRIAGE_DECIDED, at, verdict.to_dict())
        elif isinstance(effect, eng.GenerateDraft):
            self._run_generate(at)
        elif isinstance(effect, eng.EnqueueApproval):
            pass  # the approval queue is a view over AwaitingApproval states
        elif isinstance(effect, eng.ScheduleSend):
            self._arm_send_timer(effect.at)
        elif isinstance(effect, eng.SendMail):
            self._run_send(effect.body, at)
        elif isinstance(effect, eng.Terminate):
            self._cancel_send_timer()
            self._cancel_silence_timer()
        elif isinstance(effect, eng.RecordStats):
            pass  # stats are computed on demand from thread + state

    def _run_generate(self, at: datetime) -> None:
        if self.state.status is not eng.Status.DRAFT_PENDING:
            return
        # A callable policy lets the service hot-reload refusal patterns.
        policy = self.guard_policy() if callable(self.guard_policy) else self.guard_policy
        try:
            draft = generate_reply(self.thread, self.generator, policy)
        except GuardrailExhausted as exc:
            self.attention = str(exc)
            logger.warning("thread %s: %s", self.thread_key, exc)
            return
        except GeneratorError as exc:
            self.attention = f"generator failure: {exc}"
            logger.warning("thread %s: generator failure: %s", self.thread_key, exc)
            return
        payload = {
            "body": draft.body,
            "attempts": draft.attempts,
            "preamble_level": draft.preamble_level_used,
            "refusals_seen": draft.refusals_seen,
            "findings_history": [
                [f.to_dict() for f in findings] for findings in draft.findings_history
            ],
            "draft_id": draft_id_for(self.thread_key, self.state.last_seq + 1),
        }
        self._apply(eng.EventKind.DRAFT_READY, at, payload)

    def _run_send(self, draft_body: str, at: datetime) -> None:
        retry = self.state.retry_count > 0
        outbound = self._last_outbound() if retry else None
        if outbound is None:
            # Fresh reply: quote the history as it stands right now. A
            # retransmission after a transient bounce resends the recorded
            # message verbatim instead (the first copy never arrived).
            retry = False
            outbound = MailMessage(
                id=f"{self.thread_key}:out:{self.state.last_seq + 1}",
                thread_key=self.thread_key,
                direction=Direction.OUTBOUND,
                from_addr=self.our_address,
                to_addr=self.thread_key,
                subject=self.subject,
                timestamp=at,
                body_text=render_reply(self.thread, draft_body, self.signature),
            )
        try:
            verdict = self.send(outbound)
        except Exception as exc:
            self.attention = f"send transport failure: {exc}"
            logger.error("thread %s: send failed: %s", self.thread_key, exc)
            return
        self._apply(
            eng.EventKind.SENT,
            at,
            {"message": message_to_dict(outbound), "retry": retry},
        )
        if isinstance(verdict, DsnStatus):
            # Synchronous permanent/transient rejection at submit time.
            self._apply(eng.EventKind.DSN_RECEIVED, at, {"status": str(verdict)})
        if self.state.status is eng.Status.AWAITING_SCAMMER:
            self._arm_silence_timer(at + self.config.silence_timeout)

    def _last_outbound(self) -> MailMessage | None:
        for msg in reversed(self.thread.messages):
            if msg.direction is Direction.OUTBOUND:
                return msg
        return None

    def _arm_send_timer(self, at: datetime) -> None:
        self._cancel_send_timer()
        self._send_timer = self.clock.schedule(at, self._on_send_timer)

    def _arm_silence_timer(self, at: datetime) -> None:
        self._cancel_silence_timer()
        self._silence_timer = self.clock.schedule(at, self._on_silence_timer)

    def _cancel_send_timer(self) -> None:
        if self._send_timer is not None:
            self.clock.cancel(self._send_timer)
            self._send_timer = None

    def _cancel_silence_timer(self) -> None:
        if self._silence_timer is not None:
            self.clock.cancel(self._silence_timer)
            self._silence_timer = None

    def _on_send_timer(self, at: datetime) -> None:
        self._send_timer = None
        if self.state.status is not eng.Status.SCHEDULED:
            return
        if not self.may_send(at) and at < self.config.window.experiment_end:
            # Outbound rate limit hit: push the send back rather than dropping it.
            self._arm_send_timer(at + self.config.retry_backoff_base)
            return
        self._apply(eng.EventKind.TIMER_FIRED, at, {"timer": "send"})

    def _on_silence_timer(self, at: datetime) -> None:
        self._silence_timer = None
        if self.state.status is not eng.Status.AWAITING_SCAMMER:
            return
        self._apply(eng.EventKind.TIMER_FIRED, at, {"timer": "silence"})
