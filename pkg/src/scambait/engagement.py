"""Per-thread engagement state machine.

The machine is a pure fold over an event log: `step` takes a state and one
event and returns the next state plus effects for the runtime to execute.
Replaying a persisted log therefore reproduces the live state exactly,
including randomized send delays, which are derived deterministically from
(seed, thread key, event seq).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Mapping

from .mail import DsnStatus


class EngagementError(Exception):
    pass


class OutOfOrderEvent(EngagementError):
    pass


class IllegalTransition(EngagementError):
    pass


@dataclass(frozen=True)
class ObservationWindow:
    """Admission and activity interval of the experiment.

    First contacts are admitted while collection_start <= t < experiment_end;
    no mail is ever sent at or after experiment_end.
    """

    collection_start: datetime
    collection_end: datetime
    experiment_end: datetime

    def __post_init__(self) -> None:
        if not (self.collection_start < self.collection_end <= self.experiment_end):
            raise ValueError("window must satisfy collection_start < collection_end <= experiment_end")


class AdmitDecision(Enum):
    ADMIT = "Admit"
    REJECT_OUTSIDE_WINDOW = "RejectOutsideWindow"


def admit(msg, window: ObservationWindow, now: datetime) -> AdmitDecision:
    """Admission rule for a first contact: the half-open observation interval."""
    if window.collection_start <= msg.timestamp < window.experiment_end:
        return AdmitDecision.ADMIT
    return AdmitDecision.REJECT_OUTSIDE_WINDOW


class DelayDistribution(Enum):
    LOG_UNIFORM = "LogUniform"
    FIXED = "Fixed"


@dataclass(frozen=True)
class DelayPolicy:
    min_delay: timedelta
    max_delay: timedelta
    distribution: DelayDistribution = DelayDistribution.LOG_UNIFORM
    first_reply_override: timedelta | None = None

    def __post_init__(self) -> None:
        if not (timedelta(0) < self.min_delay <= self.max_delay):
            raise ValueError("delay policy requires 0 < min_delay <= max_delay")


def sample_delay(policy: DelayPolicy, rng: random.Random, is_first_reply: bool = False) -> timedelta:
    """Draw a human-looking reply delay; always within [min_delay, max_delay].

    LogUniform spreads mass across magnitudes ("minutes to weeks"); Fixed
    returns min_delay; the first reply may be pinned with an override.
    """
    if is_first_reply and policy.first_reply_override is not None:
        return policy.first_reply_override
    if policy.distribution is DelayDistribution.FIXED:
        return policy.min_delay
    lo = policy.min_delay.total_seconds()
    hi = policy.max_delay.total_seconds()
    if lo == hi:
        return policy.min_delay
    seconds = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    seconds = min(max(round(seconds), math.ceil(lo)), math.floor(hi))
    return timedelta(seconds=seconds)


class Status(Enum):
    NEW = "New"
    DRAFT_PENDING = "DraftPending"
    AWAITING_APPROVAL = "AwaitingApproval"
    SCHEDULED = "Scheduled"
    AWAITING_SCAMMER = "AwaitingScammer"
    TERMINATED = "Terminated"


class TerminationReason(Enum):
    DELIVERY_FAILED_PERMANENT = "DeliveryFailedPermanent"
    WINDOW_CLOSED = "WindowClosed"
    SCAMMER_SILENCE = "ScammerSilence"
    MANUAL_STOP = "ManualStop"


class EventKind(Enum):
    INBOUND_RECEIVED = "InboundReceived"
    TRIAGE_DECIDED = "TriageDecided"
    DRAFT_READY = "DraftReady"
    APPROVED = "Approved"
    SEND_SCHEDULED = "SendScheduled"
    SENT = "Sent"
    DSN_RECEIVED = "DsnReceived"
    TIMER_FIRED = "TimerFired"
    TERMINATED_EVENT = "TerminatedEvent"


@dataclass(frozen=True)
class EngagementEvent:
    seq: int
    at: datetime
    kind: EventKind
    payload: Mapping


@dataclass(frozen=True)
class ThreadState:
    """Snapshot of one thread's lifecycle; advanced only through `step`."""

    thread_key: str
    status: Status = Status.NEW
    termination_reason: TerminationReason | None = None
    send_at: datetime | None = None
    awaiting_since: datetime | None = None
    inbound_count: int = 0
    outbound_count: int = 0
    first_reply_at: datetime | None = None
    last_event_at: datetime | None = None
    last_seq: int = 0
    retry_count: int = 0
    draft_body: str | None = None
    last_dsn: DsnStatus | None = None
    # True between the send-timer transition and its Sent record; gates Sent
    # events so a log can never claim sends the machine did not order.
    sent_pending: bool = False

    def to_dict(self) -> dict:
        return {
            "thread_key": self.thread_key,
            "status": self.status.value,
            "termination_reason": self.termination_reason.value if self.termination_reason else None,
            "send_at": self.send_at.isoformat() if self.send_at else None,
            "awaiting_since": self.awaiting_since.isoformat() if self.awaiting_since else None,
            "inbound_count": self.inbound_count,
            "outbound_count": self.outbound_count,
            "first_reply_at": self.first_reply_at.isoformat() if self.first_reply_at else None,
            "last_event_at": self.last_event_at.isoformat() if self.last_event_at else None,
            "last_seq": self.last_seq,
            "retry_count": self.retry_count,
            "last_dsn": str(self.last_dsn) if self.last_dsn else None,
        }


# Effects: instructions to the runtime. step itself never does I/O.


@dataclass(frozen=True)
class RunTriage:
    pass


@dataclass(frozen=True)
class GenerateDraft:
    pass


@dataclass(frozen=True)
class EnqueueApproval:
    pass


@dataclass(frozen=True)
class ScheduleSend:
    at: datetime


@dataclass(frozen=True)
class SendMail:
    body: str


@dataclass(frozen=True)
class RecordStats:
    pass


@dataclass(frozen=True)
class Terminate:
    reason: TerminationReason


Effect = RunTriage | GenerateDraft | EnqueueApproval | ScheduleSend | SendMail | RecordStats | Terminate


@dataclass(frozen=True)
class EngineConfig:
    window: ObservationWindow
    delay: DelayPolicy
    approval_required: bool = False
    silence_timeout: timedelta = timedelta(days=30)
    retry_backoff_base: timedelta = timedelta(hours=4)
    retry_max_attempts: int = 3
    seed: int = 0


def initial_state(thread_key: str) -> ThreadState:
    return ThreadState(thread_key=thread_key)


def _delay_rng(config: EngineConfig, thread_key: str, seq: int) -> random.Random:
    # String seeding keeps the draw stable across processes and platforms.
    return random.Random(f"{config.seed}:{thread_key}:{seq}")


def _schedule(state: ThreadState, event: EngagementEvent, config: EngineConfig) -> tuple[ThreadState, list[Effect]]:
    rng = _delay_rng(config, state.thread_key, event.seq)
    delay = sample_delay(config.delay, rng, is_first_reply=state.outbound_count == 0)
    send_at = event.at + delay
    return replace(state, status=Status.SCHEDULED, send_at=send_at), [ScheduleSend(send_at)]


def _terminate(state: ThreadState, reason: TerminationReason) -> tuple[ThreadState, list[Effect]]:
    new = replace(
        state,
        status=Status.TERMINATED,
        termination_reason=reason,
        send_at=None,
    )
    return new, [Terminate(reason), RecordStats()]


def step(state: ThreadState, event: EngagementEvent, config: EngineConfig) -> tuple[ThreadState, list[Effect]]:
    """Pure transition function. Raises OutOfOrderEvent / IllegalTransition.

    Transition table:
      New            + InboundReceived          -> DraftPending   [RunTriage, GenerateDraft]
      DraftPending   + TriageDecided(eligible)  -> DraftPending
      DraftPending   + TriageDecided(rejected)  -> Terminated(ManualStop)
      DraftPending   + InboundReceived          -> DraftPending   [GenerateDraft]
      DraftPending   + DraftReady               -> AwaitingApproval | Scheduled
      AwaitingApproval + Approved(approve)      -> Scheduled      [ScheduleSend]
      AwaitingApproval + Approved(edit)         -> AwaitingApproval
      AwaitingApproval + Approved(reject)       -> DraftPending   [GenerateDraft]
      Scheduled      + TimerFired(send)         -> AwaitingScammer [SendMail]
                       ... but Terminated(WindowClosed), no send, at >= experiment_end
      AwaitingScammer + Sent                    -> AwaitingScammer (counters)
      AwaitingScammer + InboundReceived         -> DraftPending   [GenerateDraft]
      AwaitingScammer + DsnReceived(5.x.x)      -> Terminated(DeliveryFailedPermanent)
      AwaitingScammer + DsnReceived(4.x.x)      -> Scheduled (doubling backoff, then permanent)
      AwaitingScammer + TimerFired(silence)     -> Terminated(ScammerSilence)
      any (not Terminated) + TerminatedEvent    -> Terminated(reason)
      Terminated     + anything                 -> Terminated (absorbing, no effects)
    """
    if event.seq != state.last_seq + 1:
        raise OutOfOrderEvent(
            f"thread {state.thread_key}: expected seq {state.last_seq + 1}, got {event.seq}"
        )
    if state.last_event_at is not None and event.at < state.last_event_at:
        raise OutOfOrderEvent(
            f"thread {state.thread_key}: event time went backwards at seq {event.seq}"
        )

    def _stamp(new_state: ThreadState, effects: list[Effect]) -> tuple[ThreadState, list[Effect]]:
        return replace(new_state, last_seq=event.seq, last_event_at=event.at), effects

    status = state.status
    kind = event.kind

    if status is Status.TERMINATED:
        return _stamp(state, [])

    if kind is EventKind.TERMINATED_EVENT:
        reason = TerminationReason(event.payload.get("reason", "ManualStop"))
        return _stamp(*_terminate(state, reason))

    if status is Status.NEW:
        if kind is EventKind.INBOUND_RECEIVED:
            new = replace(state, status=Status.DRAFT_PENDING, inbound_count=1)
            return _stamp(new, [RunTriage(), GenerateDraft()])

    elif status is Status.DRAFT_PENDING:
        if kind is EventKind.TRIAGE_DECIDED:
            if event.payload.get("eligible", False):
                return _stamp(state, [])
            return _stamp(*_terminate(state, TerminationReason.MANUAL_STOP))
        if kind is EventKind.INBOUND_RECEIVED:
            new = replace(state, inbound_count=state.inbound_count + 1)
            return _stamp(new, [GenerateDraft()])
        if kind is EventKind.DRAFT_READY:
            new = replace(state, draft_body=event.payload["body"])
            if config.approval_required:
                return _stamp(replace(new, status=Status.AWAITING_APPROVAL), [EnqueueApproval()])
            return _stamp(*_schedule(new, event, config))

    elif status is Status.AWAITING_APPROVAL:
        if kind is EventKind.APPROVED:
            decision = event.payload.get("decision", "approve")
            if decision == "approve":
                return _stamp(*_schedule(state, event, config))
            if decision == "edit":
                return _stamp(replace(state, draft_body=event.payload["body"]), [])
            if decision == "reject":
                new = replace(state, status=Status.DRAFT_PENDING, draft_body=None)
                return _stamp(new, [GenerateDraft()])
            raise IllegalTransition(f"unknown approval decision {decision!r}")
        if kind is EventKind.INBOUND_RECEIVED:
            return _stamp(replace(state, inbound_count=state.inbound_count + 1), [])

    elif status is Status.SCHEDULED:
        if kind is EventKind.TIMER_FIRED and event.payload.get("timer") == "send":
            if event.at >= config.window.experiment_end:
                return _stamp(*_terminate(state, TerminationReason.WINDOW_CLOSED))
            if state.draft_body is None:
                raise IllegalTransition("send timer fired without a draft body")
            new = replace(
                state,
                status=Status.AWAITING_SCAMMER,
                awaiting_since=event.at,
                send_at=None,
                sent_pending=True,
            )
            return _stamp(new, [SendMail(state.draft_body)])
        if kind is EventKind.SEND_SCHEDULED:
            return _stamp(state, [])
        if kind is EventKind.INBOUND_RECEIVED:
            # Scammer wrote again before our scheduled reply went out; the
            # pending reply stands and covers the thread.
            return _stamp(replace(state, inbound_count=state.inbound_count + 1), [])

    elif status is Status.AWAITING_SCAMMER:
        if kind is EventKind.SENT:
            if not state.sent_pending:
                raise IllegalTransition("Sent recorded without a pending send")
            if state.retry_count > 0:  # retransmission after a transient DSN
                return _stamp(replace(state, sent_pending=False), [])
            new = replace(
                state,
                outbound_count=state.outbound_count + 1,
                first_reply_at=state.first_reply_at or event.at,
                sent_pending=False,
            )
            return _stamp(new, [])
        if kind is EventKind.INBOUND_RECEIVED:
            new = replace(
                state,
                status=Status.DRAFT_PENDING,
                inbound_count=state.inbound_count + 1,
                retry_count=0,
                sent_pending=False,
            )
            return _stamp(new, [GenerateDraft()])
        if kind is EventKind.DSN_RECEIVED:
            dsn = DsnStatus.parse(event.payload["status"])
            new = replace(state, last_dsn=dsn)
            if dsn.permanent:
                return _stamp(*_terminate(new, TerminationReason.DELIVERY_FAILED_PERMANENT))
            if dsn.transient:
                if state.retry_count >= config.retry_max_attempts:
                    return _stamp(*_terminate(new, TerminationReason.DELIVERY_FAILED_PERMANENT))
                backoff = config.retry_backoff_base * (2 ** state.retry_count)
                send_at = event.at + backoff
                new = replace(
                    new,
                    status=Status.SCHEDULED,
                    send_at=send_at,
                    retry_count=state.retry_count + 1,
                )
                return _stamp(new, [ScheduleSend(send_at)])
            # 2.x.x delivery confirmations carry no work.
            return _stamp(new, [])
        if kind is EventKind.TIMER_FIRED and event.payload.get("timer") == "silence":
            return _stamp(*_terminate(state, TerminationReason.SCAMMER_SILENCE))

    raise IllegalTransition(f"event {kind.value} not defined for status {status.value}")


def replay(events: list[EngagementEvent], config: EngineConfig, thread_key: str | None = None) -> ThreadState:
    """Left-fold of step over a seq-ordered event list; deterministic."""
    if thread_key is None:
        thread_key = derive_thread_key(events)
    state = initial_state(thread_key)
    for event in events:
        state, _ = step(state, event, config)
    return state


def derive_thread_key(events: list[EngagementEvent]) -> str:
    for event in events:
        message = event.payload.get("message") if isinstance(event.payload, Mapping) else None
        if message and message.get("thread_key"):
            return message["thread_key"]
    return ""
