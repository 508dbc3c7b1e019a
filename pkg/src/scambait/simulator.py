"""Deterministic scammer simulator: persona state machines on a virtual clock.

Personas are deliberately simple behavioral models (one-shot payload droppers,
persistent extorters, burst-pause correspondents, long-letter senders): the
point is reproducing observable patterns (mail counts, pauses, delivery
failures), not scammer prose quality. A full simulation is a pure function of
its config, seed included.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone

from .clock import VirtualClock
from .engagement import (
    AdmitDecision,
    DelayDistribution,
    DelayPolicy,
    EngagementEvent,
    EngineConfig,
    ObservationWindow,
    Status,
    ThreadState,
    admit,
)
from .mail import Attachment, Direction, DsnStatus, MailMessage, Thread
from .metrics import ThreadStats, TimelineEvent, compute_thread_stats, export_timeline
from .reply_engine import GuardPolicy, TemplateGenerator
from .runtime import ThreadRuntime
from .triage import classify


class ConfigError(ValueError):
    pass


# -- persona specs ----------------------------------------------------------


@dataclass(frozen=True)
class OneShotDropper:
    """Sends exactly one message (with a .pdf payload) and never writes again.

    With delivery_fails set, any reply to it bounces with a 5.2.1 DSN.
    """

    delivery_fails: bool = False


@dataclass(frozen=True)
class PersistentExtorter:
    """Replies promptly until its message budget runs out, then sends wire
    transfer coordinates and hangs waiting for an acknowledgement forever."""

    exchanges_before_payment_ask: int
    reply_latency: timedelta
    patience: timedelta | None = None  # None = waits forever

    def __post_init__(self) -> None:
        if self.exchanges_before_payment_ask < 1:
            raise ConfigError("exchanges_before_payment_ask must be >= 1")
        if self.reply_latency <= timedelta(0):
            raise ConfigError("reply_latency must be positive")


@dataclass(frozen=True)
class BurstPause:
    """Answers in bursts separated by long pauses, then stops.

    Each pause precedes one burst of burst_len replies; within a burst the
    persona answers reply_latency after each of our mails.
    """

    burst_len: int
    pause_durations: tuple[timedelta, ...]
    reply_latency: timedelta

    def __post_init__(self) -> None:
        if self.burst_len < 1:
            raise ConfigError("burst_len must be >= 1")
        if not self.pause_durations or any(p <= timedelta(0) for p in self.pause_durations):
            raise ConfigError("pause_durations must be non-empty and positive")
        if self.reply_latency <= timedelta(0):
            raise ConfigError("reply_latency must be positive")


@dataclass(frozen=True)
class LongLetter:
    """Sends letters of an exact character count, gives up after a few replies."""

    msg_chars: int
    gives_up_after: int
    msg_sentences: int | None = None
    reply_latency: timedelta = timedelta(days=1)

    def __post_init__(self) -> None:
        if self.msg_chars < 2 or self.gives_up_after < 1:
            raise ConfigError("msg_chars must be >= 2 and gives_up_after >= 1")


PersonaSpec = OneShotDropper | PersistentExtorter | BurstPause | LongLetter


# -- exact-size body synthesis -----------------------------------------------

_LEX = (
    "the",
    "blessed",
    "offer",
    "remains",
    "between",
    "kindly",
    "consider",
    "this",
    "matter",
    "with",
    "great",
    "urgency",
    "trusted",
    "partner",
    "funds",
    "holding",
    "secure",
    "process",
    "deposit",
    "foreign",
    "portion",
    "arrange",
    "promise",
    "quietly",
)


def _fill_words(content_len: int, offset: int) -> str:
    """A run of filler words joined by single spaces, exactly content_len chars."""
    if content_len <= 0:
        return ""
    parts: list[str] = []
    used = 0
    i = offset
    while True:
        word = _LEX[i % len(_LEX)]
        i += 1
        need = len(word) + (1 if parts else 0)
        if used + need == content_len or used + need <= content_len - 5:
            parts.append(word)
            used += need
            if used == content_len:
                break
        else:
            gap = content_len - used
            if not parts:
                return "m" * content_len
            if gap == 1:
                parts[-1] += "m"
            elif gap >= 2:
                parts.append("m" * (gap - 1))
            break
    parts[0] = parts[0].capitalize()
    return " ".join(parts)


def synthesize_body(chars: int, sentences: int, ask_reply: bool = True, variant: int = 0) -> str:
    """Build text whose stripped character and sentence counts are exact.

    Used both for metric fixtures and for persona mail bodies, so the two
    kinds of test data can never drift apart. With ask_reply the final
    sentence is a question, which satisfies the triage interaction rule.
    """
    if chars < 0 or sentences < 0:
        raise ValueError("counts must be non-negative")
    if sentences == 0:
        return "m" * chars
    budget = chars - (sentences - 1)
    if budget < 2 * sentences:
        raise ValueError(f"{chars} chars cannot hold {sentences} sentences")
    base, extra = divmod(budget, sentences)
    pieces: list[str] = []
    for i in range(sentences):
        length = base + (1 if i < extra else 0)
        terminator = "?" if (ask_reply and i == sentences - 1) else "."
        pieces.append(_fill_words(length - 1, offset=variant * 7 + i * 3) + terminator)
    # Alternate space and newline joins; both count as one character.
    out = pieces[0]
    for i, piece in enumerate(pieces[1:], start=1):
        out += ("\n" if i % 3 == 0 else " ") + piece
    return out


# -- persona state machine ----------------------------------------------------

_DSN_LATENCY = timedelta(hours=1)


@dataclass(frozen=True)
class PersonaState:
    spec: PersonaSpec
    address: str
    our_address: str
    sent_count: int = 0
    replies_seen: int = 0
    burst_sent: int = 0
    pause_index: int = 0
    pending: str | None = "first"  # what to emit at the next wake
    done: bool = False


def new_persona_state(spec: PersonaSpec, address: str, our_address: str) -> PersonaState:
    return PersonaState(spec=spec, address=address, our_address=our_address)


def _persona_mail(state: PersonaState, now: datetime, body: str, subject: str,
                  attachments: tuple[Attachment, ...] = ()) -> MailMessage:
    return MailMessage(
        id=f"{state.address}:p{state.sent_count + 1}",
        thread_key=state.address,
        direction=Direction.INBOUND,
        from_addr=state.address,
        to_addr=state.our_address,
        subject=subject,
        timestamp=now,
        body_text=body,
        attachments=attachments,
    )


def _bounce_mail(state: PersonaState, now: datetime) -> MailMessage:
    return MailMessage(
        id=f"{state.address}:dsn",
        thread_key=state.address,
        direction=Direction.INBOUND,
        from_addr="mailer-daemon@sim.invalid",
        to_addr=state.our_address,
        subject="Undelivered Mail Returned to Sender",
        timestamp=now,
        body_text="The following message could not be delivered.",
        delivery_status=DsnStatus(5, 2, 1),
    )


def _emit(state: PersonaState, now: datetime, body: str, subject: str,
          attachments: tuple[Attachment, ...] = ()) -> tuple[PersonaState, MailMessage]:
    msg = _persona_mail(state, now, body, subject, attachments)
    return replace(state, sent_count=state.sent_count + 1, pending=None), msg


def persona_step(
    state: PersonaState,
    inbound: MailMessage | None,
    now: datetime,
    rng: random.Random,
) -> tuple[PersonaState, MailMessage | None, datetime | None]:
    """Advance one persona.

    Call with inbound=None at a scheduled wake time (the persona then emits a
    message if one is pending) or with inbound set when our reply lands (the
    persona then plans its next wake). Persona outbound timestamps are always
    strictly later than the event that triggered them.
    """
    spec = state.spec

    if inbound is not None:
        if state.done:
            return state, None, None
        state = replace(state, replies_seen=state.replies_seen + 1)

        if isinstance(spec, OneShotDropper):
            if spec.delivery_fails:
                return replace(state, pending="bounce", done=True), None, now + _DSN_LATENCY
            return replace(state, done=True), None, None

        if isinstance(spec, PersistentExtorter):
            if state.sent_count < spec.exchanges_before_payment_ask:
                return replace(state, pending="reply"), None, now + spec.reply_latency
            if state.sent_count == spec.exchanges_before_payment_ask:
                return replace(state, pending="payment"), None, now + spec.reply_latency
            return replace(state, done=True), None, None  # hanged, waiting forever

        if isinstance(spec, BurstPause):
            if 0 < state.burst_sent < spec.burst_len:
                return replace(state, pending="reply"), None, now + spec.reply_latency
            if state.pause_index < len(spec.pause_durations):
                pause = spec.pause_durations[state.pause_index]
                next_state = replace(
                    state, pending="reply", pause_index=state.pause_index + 1, burst_sent=0
                )
                return next_state, None, now + pause
            return replace(state, done=True), None, None

        if isinstance(spec, LongLetter):
            if state.replies_seen >= spec.gives_up_after:
                return replace(state, done=True), None, None
            return replace(state, pending="reply"), None, now + spec.reply_latency

        return state, None, None

    # Wake: emit whatever is pending.
    pending = state.pending
    if pending is None:
        return state, None, None

    if pending == "bounce":
        return replace(state, pending=None), _bounce_mail(state, now), None

    if pending == "first":
        if isinstance(spec, OneShotDropper):
            body = synthesize_body(331, 2, variant=state.sent_count)
            pdf = Attachment("statement.pdf", "application/pdf", 48213)
            st, msg = _emit(state, now, body, "Important notice, open the attached file", (pdf,))
            return st, msg, None
        if isinstance(spec, PersistentExtorter):
            st, msg = _emit(
                state, now, synthesize_body(474, 7, variant=state.sent_count),
                "Urgent business proposal",
            )
            return st, msg, None
        if isinstance(spec, BurstPause):
            st, msg = _emit(
                state, now, synthesize_body(1382, 12, variant=state.sent_count),
                "Confidential inheritance matter",
            )
            return st, msg, None
        if isinstance(spec, LongLetter):
            sentences = spec.msg_sentences or max(1, spec.msg_chars // 100)
            st, msg = _emit(
                state, now, synthesize_body(spec.msg_chars, sentences, variant=state.sent_count),
                "Investment opportunity",
            )
            return st, msg, None

    if pending == "payment":
        st, msg = _emit(
            state, now, synthesize_body(474, 7, variant=state.sent_count),
            "Wire transfer instructions",
        )
        return st, msg, None

    if pending == "reply":
        if isinstance(spec, PersistentExtorter):
            st, msg = _emit(
                state, now, synthesize_body(474, 7, variant=state.sent_count),
                "Re: our arrangement",
            )
            return st, msg, None
        if isinstance(spec, BurstPause):
            st, msg = _emit(
                state, now, synthesize_body(1382, 12, variant=state.sent_count),
                "Re: confidential matter",
            )
            return replace(st, burst_sent=state.burst_sent + 1), msg, None
        if isinstance(spec, LongLetter):
            sentences = spec.msg_sentences or max(1, spec.msg_chars // 100)
            st, msg = _emit(
                state, now, synthesize_body(spec.msg_chars, sentences, variant=state.sent_count),
                "Re: investment opportunity",
            )
            return st, msg, None

    return state, None, None


# -- simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioEntry:
    persona: PersonaSpec
    first_contact_at: datetime
    address: str
    delay: DelayPolicy | None = None  # per-thread override of the default policy


@dataclass(frozen=True)
class SimConfig:
    entries: tuple[ScenarioEntry, ...]
    window: ObservationWindow
    seed: int = 0
    delay: DelayPolicy = DelayPolicy(
        timedelta(minutes=15), timedelta(days=21), DelayDistribution.LOG_UNIFORM
    )
    guard: GuardPolicy = GuardPolicy()
    silence_timeout: timedelta = timedelta(days=30)
    our_address: str = "m.rossi@bait.invalid"
    signature: str = "-- \nM. Rossi"

    def __post_init__(self) -> None:
        seen = set()
        for entry in self.entries:
            if entry.address in seen:
                raise ConfigError(f"duplicate persona address {entry.address}")
            seen.add(entry.address)
            if entry.first_contact_at < self.window.collection_start:
                raise ConfigError(
                    f"first contact for {entry.address} precedes the observation window"
                )


@dataclass
class SimResult:
    logs: dict[str, list[EngagementEvent]]
    states: dict[str, ThreadState]
    threads: dict[str, Thread]
    stats: list[ThreadStats]
    timeline: list[TimelineEvent]
    dropped_out_of_window: int
    engine_configs: dict[str, EngineConfig]


def run_simulation(config: SimConfig) -> SimResult:
    """Event loop over a virtual clock until every thread terminates or the
    queue drains; fully deterministic given the config (seed included)."""
    if not isinstance(config, SimConfig):
        raise ConfigError("run_simulation needs a SimConfig")

    clock = VirtualClock(config.window.collection_start)
    logs: dict[str, list[EngagementEvent]] = {}
    runtimes: dict[str, ThreadRuntime] = {}
    personas: dict[str, PersonaState] = {}
    persona_rngs: dict[str, random.Random] = {}
    engine_configs: dict[str, EngineConfig] = {}
    dropped = 0

    def append(key: str, event: EngagementEvent) -> None:
        logs.setdefault(key, []).append(event)

    def persona_wake(key: str):
        def callback(at: datetime) -> None:
            state, outbound, next_wake = persona_step(personas[key], None, at, persona_rngs[key])
            personas[key] = state
            if next_wake is not None:
                clock.schedule(next_wake, callback)
            if outbound is not None:
                route_inbound(key, outbound, at)

        return callback

    def route_inbound(key: str, msg: MailMessage, at: datetime) -> None:
        nonlocal dropped
        runtime = runtimes[key]
        if msg.delivery_status is not None:
            runtime.deliver_dsn(msg.delivery_status, at)
            return
        if runtime.state.status is Status.NEW:
            if admit(msg, config.window, at) is not AdmitDecision.ADMIT:
                dropped += 1
                return
        elif at >= config.window.experiment_end:
            # Mirror of the live policy: messages arriving outside the
            # observation window are not considered.
            dropped += 1
            return
        runtime.deliver_inbound(msg)

    def make_send(key: str):
        def send(outbound: MailMessage) -> None:
            state, out, wake = persona_step(personas[key], outbound, clock.now(), persona_rngs[key])
            personas[key] = state
            if wake is not None:
                clock.schedule(wake, persona_wake(key))
            return None

        return send

    for entry in config.entries:
        key = entry.address
        engine_configs[key] = EngineConfig(
            window=config.window,
            delay=entry.delay or config.delay,
            approval_required=False,
            silence_timeout=config.silence_timeout,
            seed=config.seed,
        )
        runtimes[key] = ThreadRuntime(
            thread_key=key,
            config=engine_configs[key],
            clock=clock,
            generator=TemplateGenerator(config.seed),
            guard_policy=config.guard,
            signature=config.signature,
            our_address=config.our_address,
            triage=lambda m: classify(m, ()),
            send=make_send(key),
            append=append,
        )
        personas[key] = new_persona_state(entry.persona, key, config.our_address)
        persona_rngs[key] = random.Random(f"{config.seed}:persona:{key}")
        clock.schedule(entry.first_contact_at, persona_wake(key))

    while clock.advance():
        if runtimes and all(rt.state.status is Status.TERMINATED for rt in runtimes.values()):
            break

    states = {key: rt.state for key, rt in runtimes.items()}
    threads = {key: rt.thread for key, rt in runtimes.items()}
    stats = [
        compute_thread_stats(rt.thread, rt.state)
        for key, rt in runtimes.items()
        if rt.thread.messages
    ]
    timeline = export_timeline([(rt.thread, rt.state) for rt in runtimes.values() if rt.thread.messages])
    return SimResult(
        logs=logs,
        states=states,
        threads=threads,
        stats=stats,
        timeline=timeline,
        dropped_out_of_window=dropped,
        engine_configs=engine_configs,
    )


# -- the 11-thread reference scenario ------------------------------------------


def _fixed(days: float, first_reply_override: timedelta | None = None) -> DelayPolicy:
    d = timedelta(days=days)
    return DelayPolicy(d, d, DelayDistribution.FIXED, first_reply_override=first_reply_override)


def reference_scenario(seed: int = 0) -> SimConfig:
    """Eleven personas tuned so the run reproduces the reference aggregates:
    thread mail counts {2,2,2,12,2,10,2,14,2,18,2}, burst threads of ~27 days
    with 8/16 and 9/14 day pauses, a ~6 day fast extortion thread, a 17-day
    delayed first reply, and three 5.2.1 delivery failures."""
    start = datetime(2022, 11, 12, tzinfo=timezone.utc)
    window = ObservationWindow(
        collection_start=start,
        collection_end=start + timedelta(days=30),
        experiment_end=start + timedelta(days=60),
    )

    def at_day(d: float) -> datetime:
        return start + timedelta(days=d)

    day = timedelta(days=1)
    entries = (
        ScenarioEntry(OneShotDropper(delivery_fails=True), at_day(0), "scammer01@sim.invalid", _fixed(1)),
        ScenarioEntry(OneShotDropper(delivery_fails=True), at_day(3), "scammer02@sim.invalid", _fixed(1)),
        ScenarioEntry(OneShotDropper(delivery_fails=True), at_day(6), "scammer03@sim.invalid", _fixed(1)),
        ScenarioEntry(
            PersistentExtorter(exchanges_before_payment_ask=5, reply_latency=timedelta(seconds=34560)),
            at_day(9),
            "scammer04@sim.invalid",
            _fixed(2, first_reply_override=17 * day),
        ),
        ScenarioEntry(
            LongLetter(msg_chars=4572, gives_up_after=1, msg_sentences=48),
            at_day(12),
            "scammer05@sim.invalid",
            _fixed(0.5),
        ),
        ScenarioEntry(
            BurstPause(burst_len=2, pause_durations=(9 * day, 14 * day), reply_latency=timedelta(seconds=17280)),
            at_day(15),
            "scammer06@sim.invalid",
            _fixed(0.9),
        ),
        ScenarioEntry(
            LongLetter(msg_chars=11094, gives_up_after=1, msg_sentences=108),
            at_day(18),
            "scammer07@sim.invalid",
            _fixed(0.5),
        ),
        ScenarioEntry(
            BurstPause(burst_len=3, pause_durations=(8 * day, 16 * day), reply_latency=timedelta(seconds=12960)),
            at_day(21),
            "scammer08@sim.invalid",
            _fixed(0.4),
        ),
        ScenarioEntry(OneShotDropper(), at_day(24), "scammer09@sim.invalid", _fixed(1)),
        ScenarioEntry(
            PersistentExtorter(exchanges_before_payment_ask=8, reply_latency=timedelta(seconds=21600)),
            at_day(27),
            "scammer10@sim.invalid",
            _fixed(0.5),
        ),
        ScenarioEntry(OneShotDropper(), at_day(30), "scammer11@sim.invalid", _fixed(1)),
    )
    return SimConfig(entries=entries, window=window, seed=seed)
