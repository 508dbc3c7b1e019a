"""Shared test fixtures: message builders and the constructed reference threads."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from scambait.engagement import Status, TerminationReason, ThreadState
from scambait.mail import Attachment, Direction, DsnStatus, MailMessage, Thread, render_reply
from scambait.simulator import synthesize_body

SIGNATURE = "-- \nM. Rossi"

T0 = datetime(2022, 11, 12, tzinfo=timezone.utc)


def make_msg(
    body: str = "Please reply to this message.",
    direction: Direction = Direction.INBOUND,
    from_addr: str = "scammer@example.com",
    to_addr: str = "bait@example.org",
    subject: str = "hello",
    timestamp: datetime | None = None,
    msg_id: str | None = None,
    body_html: str | None = None,
    attachments: tuple[Attachment, ...] = (),
    thread_key: str | None = None,
) -> MailMessage:
    if thread_key is None:
        raw = from_addr if direction is Direction.INBOUND else to_addr
        thread_key = raw.split("<")[-1].rstrip(">").strip().lower()
    return MailMessage(
        id=msg_id or f"msg-{direction.value}-{(timestamp or T0).isoformat()}",
        thread_key=thread_key,
        direction=direction,
        from_addr=from_addr,
        to_addr=to_addr,
        subject=subject,
        timestamp=timestamp or T0,
        body_text=body,
        body_html=body_html,
        attachments=attachments,
    )


# Sample exchange texts used across triage / guardrail / counting tests.
HOLIDAY_SCAM_REPLY = (
    "Dear Mario,\n"
    "\n"
    "Compliments of the Season. \n"
    "I am happy hearing from you as regards \n"
    "to this process. Send to me your number \n"
    "to call you for us to talk in details \n"
    "regarding to this transaction.\n"
    "\n"
    "thanks,\n"
    "Kar.\n"
)

HOLIDAY_SCAM_FRAGMENT = (
    "Compliments of the Season. I am happy hearing from you as regards to this process."
)

CLAIM_INQUIRY_REPLY = (
    "Dear Mr. Kar,\n"
    "\n"
    "Thank you for reaching out to me regarding the cash deposit and properties left "
    "behind by my late relative. I am interested in proceeding with making a claim on "
    "these assets and would appreciate any assistance you can provide.\n"
    "\n"
    "I understand that you need my personal information in order to facilitate the "
    "process. Please note that I am unable to disclose my full name, address, or any "
    "other personal information via email. However, I am happy to speak with you by "
    "phone or schedule a meeting in person to discuss this further.\n"
    "\n"
    "Please let me know how you would like to proceed.\n"
    "\n"
    "Best regards,\n"
    "Mario\n"
)


def build_fixture_thread(
    key: str,
    first_contact: datetime,
    scammer_n: int,
    scammer_chars: int,
    scammer_sent: int,
    ours_n: int,
    ours_chars: int,
    ours_sent: int,
    duration_days: float,
    dsn: DsnStatus | None = None,
    first_reply_delay: timedelta = timedelta(days=1),
) -> tuple[Thread, ThreadState]:
    """Assemble an alternating conversation whose per-side counts are exact.

    Our messages are full wire bodies (draft + signature + quoted history), so
    the statistics only come out right if quote/signature stripping works.
    """
    assert abs(scammer_n - ours_n) <= 1 and scammer_n >= 1
    total = scammer_n + ours_n
    thread = Thread(key)

    first_reply_at = first_contact + first_reply_delay
    stamps = [first_contact, first_reply_at]
    remaining = total - 2
    if remaining > 0:
        step = timedelta(days=duration_days) / remaining
        for i in range(1, remaining + 1):
            stamps.append(first_reply_at + step * i)

    for i in range(total):
        inbound = i % 2 == 0
        if inbound:
            body = synthesize_body(scammer_chars, scammer_sent, variant=i)
            msg = make_msg(
                body=body,
                direction=Direction.INBOUND,
                from_addr=key,
                timestamp=stamps[i],
                msg_id=f"{key}-in-{i}",
                thread_key=key,
            )
        else:
            draft = synthesize_body(ours_chars, ours_sent, variant=i)
            wire = render_reply(thread, draft, SIGNATURE)
            msg = make_msg(
                body=wire,
                direction=Direction.OUTBOUND,
                from_addr="bait@example.org",
                to_addr=key,
                timestamp=stamps[i],
                msg_id=f"{key}-out-{i}",
                thread_key=key,
            )
        thread.add(msg)

    state = ThreadState(
        thread_key=key,
        status=Status.TERMINATED,
        termination_reason=(
            TerminationReason.DELIVERY_FAILED_PERMANENT if dsn else TerminationReason.SCAMMER_SILENCE
        ),
        inbound_count=scammer_n,
        outbound_count=ours_n,
        first_reply_at=first_reply_at if ours_n else None,
        last_event_at=stamps[-1],
        last_seq=total,
        last_dsn=dsn,
    )
    return thread, state


# One row per reference thread:
# (key, dsn, scammer_n, s_chars, s_sent, ours_n, o_chars, o_sent, duration_days)
REFERENCE_ROWS = [
    ("scammer01@fixture.invalid", "5.2.1", 1, 331, 2, 1, 333, 3, 0.0),
    ("scammer02@fixture.invalid", "5.2.1", 1, 261, 1, 1, 323, 4, 0.0),
    ("scammer03@fixture.invalid", "5.2.1", 1, 291, 3, 1, 362, 4, 0.0),
    ("scammer04@fixture.invalid", None, 6, 1487, 13, 6, 536, 6, 12.0),
    ("scammer05@fixture.invalid", None, 1, 4572, 48, 1, 319, 5, 0.0),
    ("scammer06@fixture.invalid", None, 5, 987, 6, 5, 526, 6, 27.0),
    ("scammer07@fixture.invalid", None, 1, 11094, 108, 1, 487, 5, 0.0),
    ("scammer08@fixture.invalid", None, 7, 1382, 12, 7, 473, 5, 27.0),
    ("scammer09@fixture.invalid", None, 1, 120, 1, 1, 277, 5, 0.0),
    ("scammer10@fixture.invalid", None, 9, 474, 7, 9, 432, 6, 6.0),
    ("scammer11@fixture.invalid", None, 1, 207, 7, 1, 292, 7, 0.0),
]

# The published aggregates the fixtures must reproduce after display rounding:
# (total mails, scammer avg chars, scammer avg sent, ours avg chars, ours avg sent, dsn)
EXPECTED_TABLE = [
    (2, 331, 2, 333, 3, "5.2.1"),
    (2, 261, 1, 323, 4, "5.2.1"),
    (2, 291, 3, 362, 4, "5.2.1"),
    (12, 1487, 13, 536, 6, None),
    (2, 4572, 48, 319, 5, None),
    (10, 987, 6, 526, 6, None),
    (2, 11094, 108, 487, 5, None),
    (14, 1382, 12, 473, 5, None),
    (2, 120, 1, 277, 5, None),
    (18, 474, 7, 432, 6, None),
    (2, 207, 7, 292, 7, None),
]


@pytest.fixture
def reference_threads() -> list[tuple[Thread, ThreadState]]:
    pairs = []
    for i, (key, dsn, s_n, s_c, s_s, o_n, o_c, o_s, days) in enumerate(REFERENCE_ROWS):
        pairs.append(
            build_fixture_thread(
                key,
                T0 + timedelta(days=3 * i),
                s_n,
                s_c,
                s_s,
                o_n,
                o_c,
                o_s,
                days,
                dsn=DsnStatus.parse(dsn) if dsn else None,
            )
        )
    return pairs
