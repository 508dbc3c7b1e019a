"""Mailbox adapters: filesystem stores for desk runs, IMAP/SMTP for live mail.

Contract shared by all adapters: fetch_new returns each message exactly once
(idempotent cursor) and send either succeeds, returns a DsnStatus for a
synchronous rejection, or raises a transport error -- never silent loss.
"""

from __future__ import annotations

import email.message
import email.utils
import imaplib
import logging
import os
import re
import smtplib
import time
from pathlib import Path
from typing import Protocol

from ..mail import (
    Direction,
    DsnStatus,
    MailboxFormat,
    MailMessage,
    MalformedMessage,
    ingest_mailbox,
    parse_rfc822,
)

logger = logging.getLogger(__name__)


class MailboxAdapter(Protocol):
    def fetch_new(self) -> list[MailMessage]: ...

    def send(self, msg: MailMessage) -> DsnStatus | None: ...


def to_mime(msg: MailMessage) -> email.message.EmailMessage:
    mime = email.message.EmailMessage()
    mime["From"] = msg.from_addr
    mime["To"] = msg.to_addr
    mime["Subject"] = msg.subject
    mime["Date"] = email.utils.format_datetime(msg.timestamp)
    mime["Message-ID"] = f"<{msg.id}@scambait>" if "@" not in msg.id else f"<{msg.id}>"
    if msg.in_reply_to:
        mime["In-Reply-To"] = f"<{msg.in_reply_to}>"
    mime.set_content(msg.body_text)
    return mime


class FileMailbox:
    """Polls a maildir or mbox for inbound mail; writes outbound to a maildir.

    The cursor file records every message id already handed out, so repeated
    polls (and restarts) never deliver a message twice.
    """

    def __init__(self, path: str | Path | None, fmt: MailboxFormat, cursor_path: str | Path,
                 outbox_dir: str | Path):
        # path may be empty: outbox-only operation (inbound fed some other way).
        self.path = Path(path) if path else None
        self.format = fmt
        self.cursor_path = Path(cursor_path)
        self.outbox_dir = Path(outbox_dir)
        for sub in ("new", "cur", "tmp"):
            (self.outbox_dir / sub).mkdir(parents=True, exist_ok=True)
        self._seen: set[str] = set()
        if self.cursor_path.exists():
            for line in self.cursor_path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if line:
                    self._seen.add(line)
        self._counter = 0

    def fetch_new(self) -> list[MailMessage]:
        if self.path is None:
            return []
        result = ingest_mailbox(self.path, self.format, direction=Direction.INBOUND)
        for diag in result.diagnostics:
            logger.warning("skipping unparseable message %s: %s", diag.entry, diag.error)
        fresh = [m for m in result.messages if m.id not in self._seen]
        if fresh:
            with open(self.cursor_path, "a", encoding="utf-8") as fh:
                for m in fresh:
                    fh.write(m.id + "\n")
                    self._seen.add(m.id)
        return fresh

    def send(self, msg: MailMessage) -> DsnStatus | None:
        self._counter += 1
        name = f"{int(time.time())}.{os.getpid()}_{self._counter}.scambait"
        target = self.outbox_dir / "new" / name
        target.write_bytes(to_mime(msg).as_bytes())
        return None


_ENHANCED_STATUS_RE = re.compile(r"\b([245])\.(\d{1,3})\.(\d{1,3})\b")


def dsn_from_smtp_error(code: int, message: bytes | str) -> DsnStatus:
    """Map an SMTP rejection to a DSN status: prefer the enhanced status code
    embedded in the response text, fall back to the reply-code class."""
    text = message.decode("utf-8", errors="replace") if isinstance(message, bytes) else str(message)
    m = _ENHANCED_STATUS_RE.search(text)
    if m:
        return DsnStatus(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    class_digit = code // 100
    if class_digit not in (2, 4, 5):
        class_digit = 5
    return DsnStatus(class_digit, 0, 0)


class NetMailbox:
    """IMAP fetch + SMTP submission. Inbound DSN reports come back as regular
    messages whose delivery_status is set; the service routes those to the
    state machine as DsnReceived events."""

    def __init__(
        self,
        imap_host: str,
        imap_port: int,
        username: str,
        password_env: str,
        smtp_host: str,
        smtp_port: int,
        folder: str = "INBOX",
    ):
        self.imap_host = imap_host
        self.imap_port = imap_port
        self.username = username
        self.password_env = password_env
        self.smtp_host = smtp_host
        self.smtp_port = smtp_port
        self.folder = folder

    def _password(self) -> str:
        password = os.environ.get(self.password_env, "")
        if not password:
            raise RuntimeError(f"mail password env var {self.password_env} is empty")
        return password

    def fetch_new(self) -> list[MailMessage]:
        messages: list[MailMessage] = []
        with imaplib.IMAP4_SSL(self.imap_host, self.imap_port) as conn:
            conn.login(self.username, self._password())
            conn.select(self.folder)
            ok, data = conn.uid("search", None, "UNSEEN")
            if ok != "OK":
                raise RuntimeError("IMAP search failed")
            for uid in data[0].split():
                ok, fetched = conn.uid("fetch", uid, "(RFC822)")
                if ok != "OK" or not fetched or fetched[0] is None:
                    logger.warning("IMAP fetch failed for uid %r", uid)
                    continue
                raw = fetched[0][1]
                try:
                    messages.append(parse_rfc822(raw, direction=Direction.INBOUND))
                except MalformedMessage as exc:
                    logger.warning("unparseable inbound message uid %r: %s", uid, exc)
                # Marking seen is the idempotency cursor here.
                conn.uid("store", uid, "+FLAGS", "(\\Seen)")
        return messages

    def send(self, msg: MailMessage) -> DsnStatus | None:
        mime = to_mime(msg)
        try:
            with smtplib.SMTP(self.smtp_host, self.smtp_port, timeout=30) as conn:
                conn.starttls()
                conn.login(self.username, self._password())
                conn.send_message(mime)
        except smtplib.SMTPRecipientsRefused as exc:
            code, detail = next(iter(exc.recipients.values()))
            return dsn_from_smtp_error(code, detail)
        except smtplib.SMTPResponseException as exc:
            if 500 <= exc.smtp_code < 600:
                return dsn_from_smtp_error(exc.smtp_code, exc.smtp_error)
            raise
        return None
