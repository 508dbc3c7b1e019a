"""Per-thread volume statistics, report aggregation, and timeline export.

Character and sentence counts apply to fresh content only: quoted lines and
the signature block are stripped first, otherwise per-message lengths would
balloon as threads quote their whole history back and forth.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from .engagement import TerminationReason, ThreadState
from .mail import Direction, DsnStatus, MailMessage, Thread


class EmptyThread(ValueError):
    pass


def _strip_fresh(body: str) -> str:
    """Drop quoted lines, then everything from the signature delimiter on."""
    lines = [line for line in body.splitlines() if not line.lstrip().startswith(">")]
    for i, line in enumerate(lines):
        if line.rstrip() == "--":
            lines = lines[:i]
            break
    return "\n".join(lines).strip()


def count_chars(body: str) -> int:
    """Unicode scalar count of the stripped body; inner newlines count as 1."""
    return len(_strip_fresh(body))


_TERMINATOR_RE = re.compile(r"[.!?]+(?=\s|$)")


def count_sentences(body: str) -> int:
    """Segments ending in .!? (followed by whitespace or end of text); a
    trailing unterminated segment of at least two words counts as one."""
    text = _strip_fresh(body)
    if not text:
        return 0
    count = len(_TERMINATOR_RE.findall(text))
    tail = _TERMINATOR_RE.split(text)[-1].strip()
    if tail and len(tail.split()) >= 2:
        count += 1
    return count


@dataclass(frozen=True)
class SideStats:
    message_count: int
    avg_chars: float
    avg_sentences: float


def _side_stats(messages: list[MailMessage]) -> SideStats:
    if not messages:
        return SideStats(0, 0.0, 0.0)
    chars = [count_chars(m.body_text) for m in messages]
    sents = [count_sentences(m.body_text) for m in messages]
    n = len(messages)
    return SideStats(n, sum(chars) / n, sum(sents) / n)


@dataclass(frozen=True)
class ThreadStats:
    """One report row: volume and engagement figures for a thread."""

    thread_key: str
    total_mails: int
    scammer: SideStats
    ours: SideStats
    engagement_days: float
    first_reply_delay: timedelta | None
    termination: TerminationReason | None
    dsn: DsnStatus | None
    first_contact_at: datetime | None


def compute_thread_stats(thread: Thread, state: ThreadState) -> ThreadStats:
    """Volume statistics for one thread.

    engagement_days runs from the first reply to the last message of the
    thread; it is 0 when no reply was ever sent. Values are stored exact and
    rounded only for tabular display.
    """
    if not thread.messages:
        raise EmptyThread(f"thread {thread.thread_key} has no messages")

    inbound = [m for m in thread.messages if m.direction is Direction.INBOUND]
    outbound = [m for m in thread.messages if m.direction is Direction.OUTBOUND]

    first_reply_at = state.first_reply_at
    if first_reply_at is None and outbound:
        first_reply_at = outbound[0].timestamp

    last_at = thread.messages[-1].timestamp
    engagement_days = 0.0
    if first_reply_at is not None:
        engagement_days = max(0.0, (last_at - first_reply_at).total_seconds() / 86400.0)

    first_contact = inbound[0].timestamp if inbound else thread.messages[0].timestamp
    first_reply_delay = None
    if first_reply_at is not None:
        first_reply_delay = first_reply_at - first_contact

    return ThreadStats(
        thread_key=thread.thread_key,
        total_mails=len(thread.messages),
        scammer=_side_stats(inbound),
        ours=_side_stats(outbound),
        engagement_days=engagement_days,
        first_reply_delay=first_reply_delay,
        termination=state.termination_reason,
        dsn=state.last_dsn,
        first_contact_at=first_contact,
    )


@dataclass(frozen=True)
class ReportSummary:
    mean_engagement_days: float
    replying_thread_count: int
    max_thread_mails: int
    dsn_terminated_count: int


@dataclass(frozen=True)
class Report:
    rows: tuple[ThreadStats, ...]
    summary: ReportSummary


def _is_replying(stats: ThreadStats) -> bool:
    # "Replying" threads: we replied at least once and the scammer kept the
    # thread alive past our first reply.
    return stats.ours.message_count >= 1 and stats.engagement_days > 0.0


def aggregate_report(stats: list[ThreadStats]) -> Report:
    """Rows sorted by first-contact date plus summary lines."""
    rows = tuple(
        sorted(stats, key=lambda s: (s.first_contact_at or datetime.min, s.thread_key))
    )
    replying = [s for s in rows if _is_replying(s)]
    mean_days = sum(s.engagement_days for s in replying) / len(replying) if replying else 0.0
    return Report(
        rows=rows,
        summary=ReportSummary(
            mean_engagement_days=mean_days,
            replying_thread_count=len(replying),
            max_thread_mails=max((s.total_mails for s in rows), default=0),
            dsn_terminated_count=sum(
                1 for s in rows if s.termination is TerminationReason.DELIVERY_FAILED_PERMANENT
            ),
        ),
    )


REPORT_CSV_HEADER = (
    "thread_key,total_mails,scammer_n,scammer_avg_chars,scammer_avg_sent,"
    "ours_n,ours_avg_chars,ours_avg_sent,engagement_days,dsn"
)


def report_csv(report: Report) -> str:
    """Machine-readable companion; values exact so rows round-trip losslessly."""
    lines = [REPORT_CSV_HEADER]
    for s in report.rows:
        lines.append(
            ",".join(
                [
                    s.thread_key,
                    str(s.total_mails),
                    str(s.scammer.message_count),
                    repr(s.scammer.avg_chars),
                    repr(s.scammer.avg_sentences),
                    str(s.ours.message_count),
                    repr(s.ours.avg_chars),
                    repr(s.ours.avg_sentences),
                    repr(s.engagement_days),
                    str(s.dsn) if s.dsn else "",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[dict]:
    rows = []
    lines = [line for line in text.splitlines() if line]
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            {
                "thread_key": parts[0],
                "total_mails": int(parts[1]),
                "scammer_n": int(parts[2]),
                "scammer_avg_chars": float(parts[3]),
                "scammer_avg_sent": float(parts[4]),
                "ours_n": int(parts[5]),
                "ours_avg_chars": float(parts[6]),
                "ours_avg_sent": float(parts[7]),
                "engagement_days": float(parts[8]),
                "dsn": parts[9] or None,
            }
        )
    return rows


def render_table(report: Report) -> str:
    """Human-readable aligned table; display values rounded half-to-even."""
    header = (
        "Thread",
        "SMTP Status",
        "No. Mails",
        "Scammer Chars",
        "Scammer Sent.",
        "Ours Chars",
        "Ours Sent.",
        "Days",
    )
    body = []
    for s in report.rows:
        body.append(
            (
                s.thread_key,
                f"Failed ({s.dsn})" if s.dsn else "-",
                str(s.total_mails),
                str(round(s.scammer.avg_chars)),
                str(round(s.scammer.avg_sentences)),
                str(round(s.ours.avg_chars)),
                str(round(s.ours.avg_sentences)),
                str(round(s.engagement_days)),
            )
        )
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i]) for i in range(len(header))]
    out = io.StringIO()
    out.write("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in body:
        out.write("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip() + "\n")
    s = report.summary
    out.write(
        f"\nThreads: {len(report.rows)}  "
        f"Mean engagement (replying threads): {s.mean_engagement_days:.1f} days over {s.replying_thread_count}  "
        f"Max thread length: {s.max_thread_mails} mails  "
        f"DSN-terminated: {s.dsn_terminated_count}\n"
    )
    return out.getvalue()


@dataclass(frozen=True)
class TimelineEvent:
    thread_key: str
    day_offset: float
    direction: Direction


TIMELINE_CSV_HEADER = "thread_key,day_offset,direction"


def export_timeline(threads: list[tuple[Thread, ThreadState]]) -> list[TimelineEvent]:
    """One event per message, day offsets relative to the thread's first inbound."""
    events: list[TimelineEvent] = []
    for thread, _state in threads:
        if not thread.messages:
            continue
        anchor = thread.first_inbound() or thread.messages[0]
        for msg in thread.messages:
            offset = (msg.timestamp - anchor.timestamp).total_seconds() / 86400.0
            events.append(TimelineEvent(thread.thread_key, max(0.0, offset), msg.direction))
    return events


def timeline_csv(events: list[TimelineEvent]) -> str:
    lines = [TIMELINE_CSV_HEADER]
    for e in events:
        lines.append(f"{e.thread_key},{repr(e.day_offset)},{e.direction.value}")
    return "\n".join(lines) + "\n"
