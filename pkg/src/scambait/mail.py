"""Mail message model: RFC-822/MIME parsing, mailbox ingestion, threading, reply rendering.

All types here are immutable value objects; parsing is a pure function of the
raw bytes, so everything is safe to share across threads.
"""

from __future__ import annotations

import email
import email.policy
import hashlib
import json
import mailbox as _mailbox
from bisect import insort
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from email.utils import parseaddr, parsedate_to_datetime
from enum import Enum
from pathlib import Path


class MailError(Exception):
    """Base class for mail-model failures."""


class MalformedMessage(MailError):
    """The raw bytes could not be parsed into a usable message."""


class MissingDate(MalformedMessage):
    """The message has no usable Date header."""


class MissingAddress(MailError):
    """The message lacks the counterparty address needed for threading."""


class Direction(Enum):
    INBOUND = "Inbound"
    OUTBOUND = "Outbound"


@dataclass(frozen=True)
class DsnStatus:
    """SMTP enhanced status code, e.g. 5.2.1 (permanent mailbox failure)."""

    class_digit: int
    subject_digit: int
    detail_digit: int

    def __post_init__(self) -> None:
        if self.class_digit not in (2, 4, 5):
            raise ValueError(f"DSN class digit must be 2, 4 or 5, got {self.class_digit}")
        if self.subject_digit < 0 or self.detail_digit < 0:
            raise ValueError("DSN subject/detail digits must be non-negative")

    def __str__(self) -> str:
        return f"{self.class_digit}.{self.subject_digit}.{self.detail_digit}"

    @classmethod
    def parse(cls, text: str) -> "DsnStatus":
        parts = text.strip().split(".")
        if len(parts) != 3 or not all(p.isdigit() for p in parts):
            raise ValueError(f"not a DSN status code: {text!r}")
        return cls(int(parts[0]), int(parts[1]), int(parts[2]))

    @property
    def permanent(self) -> bool:
        return self.class_digit == 5

    @property
    def transient(self) -> bool:
        return self.class_digit == 4


@dataclass(frozen=True)
class Attachment:
    filename: str
    media_type: str
    size_bytes: int

    def __post_init__(self) -> None:
        if self.size_bytes < 0:
            raise ValueError("attachment size_bytes must be >= 0")


@dataclass(frozen=True, order=True)
class MailMessage:
    """One parsed mail. Ordering is (timestamp, id) so threads sort stably."""

    timestamp: datetime
    id: str
    thread_key: str = field(compare=False)
    direction: Direction = field(compare=False)
    from_addr: str = field(compare=False)
    to_addr: str = field(compare=False)
    subject: str = field(compare=False, default="")
    body_text: str = field(compare=False, default="")
    body_html: str | None = field(compare=False, default=None)
    attachments: tuple[Attachment, ...] = field(compare=False, default=())
    in_reply_to: str | None = field(compare=False, default=None)
    delivery_status: DsnStatus | None = field(compare=False, default=None)
    # Original Date header value, kept so header re-serialization is byte-exact.
    # Not part of the canonical JSON form.
    raw_date: str | None = field(compare=False, default=None)


def message_to_dict(msg: MailMessage) -> dict:
    """Canonical JSON object for the event log and control API."""
    return {
        "id": msg.id,
        "thread_key": msg.thread_key,
        "direction": msg.direction.value,
        "from_addr": msg.from_addr,
        "to_addr": msg.to_addr,
        "subject": msg.subject,
        "timestamp": msg.timestamp.astimezone(timezone.utc).isoformat(),
        "body_text": msg.body_text,
        "body_html": msg.body_html,
        "attachments": [
            {"filename": a.filename, "media_type": a.media_type, "size_bytes": a.size_bytes}
            for a in msg.attachments
        ],
        "in_reply_to": msg.in_reply_to,
        "delivery_status": str(msg.delivery_status) if msg.delivery_status else None,
    }


def message_from_dict(data: dict) -> MailMessage:
    return MailMessage(
        id=data["id"],
        thread_key=data["thread_key"],
        direction=Direction(data["direction"]),
        from_addr=data["from_addr"],
        to_addr=data["to_addr"],
        subject=data.get("subject", ""),
        timestamp=datetime.fromisoformat(data["timestamp"]),
        body_text=data.get("body_text", ""),
        body_html=data.get("body_html"),
        attachments=tuple(
            Attachment(a["filename"], a["media_type"], a["size_bytes"])
            for a in data.get("attachments", ())
        ),
        in_reply_to=data.get("in_reply_to"),
        delivery_status=DsnStatus.parse(data["delivery_status"]) if data.get("delivery_status") else None,
    )


def message_to_json(msg: MailMessage) -> str:
    return json.dumps(message_to_dict(msg), sort_keys=True, separators=(",", ":"))


@dataclass
class Thread:
    """Time-ordered conversation with one counterparty address."""

    thread_key: str
    messages: list[MailMessage] = field(default_factory=list)

    def add(self, msg: MailMessage) -> None:
        if msg.thread_key != self.thread_key:
            raise ValueError(
                f"message thread_key {msg.thread_key!r} does not match thread {self.thread_key!r}"
            )
        insort(self.messages, msg)

    def latest(self) -> MailMessage | None:
        return self.messages[-1] if self.messages else None

    def latest_inbound(self) -> MailMessage | None:
        for msg in reversed(self.messages):
            if msg.direction is Direction.INBOUND:
                return msg
        return None

    def first_inbound(self) -> MailMessage | None:
        for msg in self.messages:
            if msg.direction is Direction.INBOUND:
                return msg
        return None


def normalize_address(raw: str) -> str:
    """Extract the addr-spec from a header value and normalize it for threading."""
    _, addr = parseaddr(raw)
    return (addr or raw).strip().lower()


def thread_key_of(msg: MailMessage) -> str:
    """Threading key: the normalized counterparty address.

    Inbound mail is keyed by sender, outbound by recipient; display names and
    case changes do not affect the key.
    """
    raw = msg.from_addr if msg.direction is Direction.INBOUND else msg.to_addr
    key = normalize_address(raw) if raw else ""
    if not key or "@" not in key:
        side = "from_addr" if msg.direction is Direction.INBOUND else "to_addr"
        raise MissingAddress(f"message {msg.id} has no usable {side}")
    return key


def _decode_part(part) -> str:
    """Decode a text part using its declared charset, falling back to UTF-8
    with replacement characters. Never fails on bad bytes."""
    try:
        return part.get_content()
    except (LookupError, UnicodeDecodeError, KeyError):
        payload = part.get_payload(decode=True) or b""
        return payload.decode("utf-8", errors="replace")


def _parse_date(parsed) -> tuple[datetime, str]:
    raw = parsed.get("Date")
    if raw is None:
        raise MissingDate("message has no Date header")
    try:
        stamp = parsedate_to_datetime(str(raw))
    except (TypeError, ValueError) as exc:
        raise MissingDate(f"unparseable Date header: {raw!r}") from exc
    if stamp is None:
        raise MissingDate(f"unparseable Date header: {raw!r}")
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc), str(raw)


def _extract_dsn(parsed) -> tuple[DsnStatus | None, str | None]:
    """Pull (status, final recipient) out of a multipart/report delivery-status part."""
    if parsed.get_content_type() != "multipart/report":
        return None, None
    if (parsed.get_param("report-type") or "").lower() != "delivery-status":
        return None, None
    status = None
    recipient = None
    for part in parsed.walk():
        if part.get_content_type() != "message/delivery-status":
            continue
        for block in part.get_payload():
            raw_status = block.get("Status")
            if raw_status and status is None:
                try:
                    status = DsnStatus.parse(str(raw_status).split()[0].split("(")[0])
                except ValueError:
                    pass
            raw_rcpt = block.get("Final-Recipient") or block.get("Original-Recipient")
            if raw_rcpt and recipient is None:
                # Form is "rfc822; user@example.com"
                recipient = str(raw_rcpt).split(";")[-1].strip()
    return status, recipient


def parse_rfc822(raw_bytes: bytes, direction: Direction = Direction.INBOUND) -> MailMessage:
    """Parse raw RFC-822/MIME bytes into a MailMessage.

    The first text/plain part becomes body_text and the first text/html part
    becomes body_html; every other leaf part is listed as an attachment.
    """
    try:
        parsed = email.message_from_bytes(raw_bytes, policy=email.policy.default)
    except Exception as exc:  # the email package raises a zoo of types here
        raise MalformedMessage(f"unparseable message: {exc}") from exc

    timestamp, raw_date = _parse_date(parsed)

    body_text = ""
    body_html: str | None = None
    attachments: list[Attachment] = []
    index = 0
    for part in parsed.walk():
        if part.is_multipart():
            continue
        index += 1
        ctype = part.get_content_type()
        disposition = (part.get_content_disposition() or "").lower()
        if ctype == "text/plain" and not body_text and disposition != "attachment":
            body_text = _decode_part(part)
        elif ctype == "text/html" and body_html is None and disposition != "attachment":
            body_html = _decode_part(part)
        else:
            payload = part.get_payload(decode=True)
            if payload is None:
                payload = str(part.get_payload()).encode("utf-8", errors="replace")
            name = part.get_filename() or f"part-{index}"
            attachments.append(Attachment(name, ctype, len(payload)))

    dsn_status, dsn_recipient = _extract_dsn(parsed)

    msg_id = str(parsed.get("Message-ID", "")).strip().strip("<>")
    if not msg_id:
        msg_id = "sha1:" + hashlib.sha1(raw_bytes).hexdigest()

    from_addr = str(parsed.get("From", ""))
    to_addr = str(parsed.get("To", ""))
    in_reply_to = str(parsed.get("In-Reply-To", "")).strip().strip("<>") or None

    if dsn_status is not None and dsn_recipient:
        # A bounce report threads back to the conversation whose send failed.
        key = normalize_address(dsn_recipient)
    else:
        counterparty = from_addr if direction is Direction.INBOUND else to_addr
        key = normalize_address(counterparty) if counterparty else ""
        if "@" not in key:
            key = ""

    return MailMessage(
        id=msg_id,
        thread_key=key,
        direction=direction,
        from_addr=from_addr,
        to_addr=to_addr,
        subject=str(parsed.get("Subject", "")),
        timestamp=timestamp,
        body_text=body_text,
        body_html=body_html,
        attachments=tuple(attachments),
        in_reply_to=in_reply_to,
        delivery_status=dsn_status,
        raw_date=raw_date,
    )


def format_headers(msg: MailMessage) -> str:
    """Re-serialize the core headers; byte-exact for ASCII headers of parsed mail."""
    date = msg.raw_date
    if date is None:
        date = email.utils.format_datetime(msg.timestamp)
    return (
        f"From: {msg.from_addr}\n"
        f"To: {msg.to_addr}\n"
        f"Subject: {msg.subject}\n"
        f"Date: {date}\n"
    )


class MailboxFormat(Enum):
    MBOX = "mbox"
    MAILDIR = "maildir"


@dataclass(frozen=True)
class IngestDiagnostic:
    entry: str
    error: str


@dataclass
class IngestResult:
    messages: list[MailMessage]
    diagnostics: list[IngestDiagnostic]


def ingest_mailbox(
    path: str | Path,
    format: MailboxFormat,
    direction: Direction = Direction.INBOUND,
) -> IngestResult:
    """Parse every message in an mbox file or Maildir.

    Parse failures are collected per message rather than aborting the run, so
    one corrupt entry never loses the rest of the store.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mailbox path does not exist: {path}")
    if format is MailboxFormat.MBOX:
        store = _mailbox.mbox(str(path), create=False)
    else:
        store = _mailbox.Maildir(str(path), create=False)

    messages: list[MailMessage] = []
    diagnostics: list[IngestDiagnostic] = []
    try:
        for key in store.iterkeys():
            try:
                raw = store.get_bytes(key)
                messages.append(parse_rfc822(raw, direction=direction))
            except MailError as exc:
                diagnostics.append(IngestDiagnostic(str(key), str(exc)))
    finally:
        store.close()

    messages.sort()
    return IngestResult(messages, diagnostics)


def render_reply(thread: Thread, new_body: str, signature: str) -> str:
    """Compose the wire body of a reply: fresh text, signature, quoted history.

    Prior messages are quoted newest-first; each nesting level adds one "> "
    prefix, so the oldest message carries the deepest quoting.
    """
    if not new_body:
        raise ValueError("new_body must be non-empty")
    out = f"{new_body}\n\n{signature}\n\n"
    quoted: list[str] = []
    for depth, msg in enumerate(reversed(thread.messages), start=1):
        prefix = "> " * depth
        body = msg.body_text or (msg.body_html or "")
        for line in body.splitlines():
            quoted.append(prefix + line)
    return out + "\n".join(quoted)
