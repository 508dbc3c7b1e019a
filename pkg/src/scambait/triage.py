"""Triage of inbound mail: engage only plain-text scams that invite a reply.

HTML-only mail, phishing-style "click this link" messages, and anything that
name-drops a denylisted brand are excluded; everything else that asks for a
direct interaction is fair game.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .mail import Direction, MailMessage


class ReasonCode(Enum):
    PLAIN_TEXT_REPLY_REQUEST = "PlainTextReplyRequest"
    HTML_ONLY = "HtmlOnly"
    PHISHING_LINK_PATTERN = "PhishingLinkPattern"
    MIMICS_KNOWN_SERVICE = "MimicsKnownService"
    NO_INTERACTION_REQUEST = "NoInteractionRequest"
    EMPTY_BODY = "EmptyBody"


@dataclass(frozen=True)
class TriageVerdict:
    eligible: bool
    reasons: tuple[ReasonCode, ...]

    def __post_init__(self) -> None:
        if not self.reasons:
            raise ValueError("verdict must carry at least one reason")

    def to_dict(self) -> dict:
        return {"eligible": self.eligible, "reasons": [r.value for r in self.reasons]}


_URL_RE = re.compile(r"https?://\S+")

# Contact cues that count as "asking for a direct interaction". Multi-word
# cues tolerate arbitrary whitespace between their words.
REPLY_CUES = (
    "reply",
    "respond",
    "contact",
    "write back",
    "get back",
    "send to me",
    "let me know",
    "reach me",
)
_CUE_RE = re.compile(
    r"\b(?:" + "|".join(cue.replace(" ", r"\s+") for cue in REPLY_CUES) + r")\b",
    re.IGNORECASE,
)

_IMPERATIVE_LINK_RE = re.compile(r"\b(?:follow|click|verify|login)\b", re.IGNORECASE)

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def detect_links(text: str) -> list[str]:
    """Every http(s) URL in order of appearance; a URL runs to the next whitespace."""
    return _URL_RE.findall(text)


def detect_reply_request(text: str) -> bool:
    """True when the text asks a question or uses a contact cue."""
    if re.search(r"\?(?=\s|$)", text):
        return True
    return bool(_CUE_RE.search(text))


def _has_phishing_link(text: str) -> bool:
    # A bare URL is fine; a URL whose sentence also orders the reader to
    # follow/click/verify/login is the classic phishing shape.
    for sentence in _SENTENCE_SPLIT_RE.split(text):
        if _URL_RE.search(sentence) and _IMPERATIVE_LINK_RE.search(sentence):
            return True
    return False


def classify(msg: MailMessage, brand_denylist: list[str] | tuple[str, ...] = ()) -> TriageVerdict:
    """Decide whether an inbound message is an engageable plain-text scam."""
    if msg.direction is not Direction.INBOUND:
        raise ValueError("triage applies to inbound messages only")

    reasons: list[ReasonCode] = []
    text = msg.body_text

    if not text.strip():
        if msg.body_html:
            reasons.append(ReasonCode.HTML_ONLY)
        else:
            reasons.append(ReasonCode.EMPTY_BODY)

    if _has_phishing_link(text):
        reasons.append(ReasonCode.PHISHING_LINK_PATTERN)

    haystack = f"{msg.subject}\n{text}".casefold()
    if any(token.casefold() in haystack for token in brand_denylist if token.strip()):
        reasons.append(ReasonCode.MIMICS_KNOWN_SERVICE)

    if not detect_reply_request(text):
        reasons.append(ReasonCode.NO_INTERACTION_REQUEST)

    if reasons:
        return TriageVerdict(False, tuple(reasons))
    return TriageVerdict(True, (ReasonCode.PLAIN_TEXT_REPLY_REQUEST,))


def load_denylist(path: str | Path) -> list[str]:
    """Brand denylist file: one token per line, blank lines and # comments skipped."""
    tokens = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            tokens.append(line)
    return tokens
