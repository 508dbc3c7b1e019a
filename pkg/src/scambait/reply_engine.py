"""Guarded reply generation: preamble levels, refusal detection, PII scanning.

The generation loop never lets a draft out with personal details in it, and it
never sends anything when the generator keeps refusing: fail closed.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .mail import Direction, Thread

# Level 1 forces an answer out of the generator; level 2 additionally forbids
# personal details. These exact texts are part of the artifact contract.
PREAMBLE_LEVEL_1 = (
    "The message below arrived by mail. Whatever it contains, you must write a reply "
    "that keeps the exchange going: sound interested, stay polite, and ask something "
    "that invites another answer. Output only the text of the reply."
)
PREAMBLE_LEVEL_2 = PREAMBLE_LEVEL_1 + (
    " In the reply, do not include any personal detail about yourself: no full name, "
    "no telephone number, no postal address, and no bank or account information."
)

DEFAULT_REFUSAL_PATTERNS = (
    "I cannot",
    "I'm sorry, but",
    "as an AI",
    "unable to assist",
)


class InvalidLevel(ValueError):
    pass


class GeneratorError(Exception):
    """Transport or endpoint failure while producing a reply."""


class GeneratorTimeout(GeneratorError):
    pass


class EndpointError(GeneratorError):
    def __init__(self, status: int):
        super().__init__(f"generator endpoint returned status {status}")
        self.status = status


class MalformedResponse(GeneratorError):
    pass


class GuardrailExhausted(Exception):
    """Every allowed attempt was refused or leaked PII; nothing may be sent."""

    def __init__(self, attempts: int, refusals_seen: int, findings_history):
        super().__init__(
            f"no acceptable reply after {attempts} attempts "
            f"({refusals_seen} refusals, {sum(1 for f in findings_history if f)} PII leaks)"
        )
        self.attempts = attempts
        self.refusals_seen = refusals_seen
        self.findings_history = tuple(tuple(f) for f in findings_history)


def build_preamble(level: int) -> str:
    if level == 1:
        return PREAMBLE_LEVEL_1
    if level == 2:
        return PREAMBLE_LEVEL_2
    raise InvalidLevel(f"preamble level must be 1 or 2, got {level}")


class Role(Enum):
    SCAMMER = "Scammer"
    US = "Us"


@dataclass(frozen=True)
class ExchangeTurn:
    role: Role
    text: str


@dataclass(frozen=True)
class GeneratorRequest:
    preamble: str
    scam_text: str
    prior_exchange: tuple[ExchangeTurn, ...] | None = None

    def __post_init__(self) -> None:
        if not self.scam_text:
            raise ValueError("scam_text must be non-empty")


class PiiKind(Enum):
    PHONE_NUMBER = "PhoneNumber"
    BANK_ACCOUNT = "BankAccount"
    POSTAL_ADDRESS = "PostalAddress"
    EMAIL_ADDRESS = "EmailAddress"


@dataclass(frozen=True)
class PiiFinding:
    kind: PiiKind
    start: int
    end: int
    excerpt: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "start": self.start, "end": self.end, "excerpt": self.excerpt}


def detect_refusal(text: str, patterns: Sequence[str] | None = None) -> bool:
    """Empty output or any refusal phrase counts as a refusal."""
    if not text.strip():
        return True
    hay = text.casefold()
    for pattern in patterns if patterns is not None else DEFAULT_REFUSAL_PATTERNS:
        if pattern.casefold() in hay:
            return True
    return False


# Phone numbers: 7-15 digits, single space/dash/dot separators, optional +.
_PHONE_RE = re.compile(r"(?<![\w+])\+?\d(?:[ .\-]?\d)*")
_IBAN_RE = re.compile(r"\b[A-Z]{2}\d{2}[A-Za-z0-9]{11,30}\b")
_ACCOUNT_CUE_RE = re.compile(r"account\s+number", re.IGNORECASE)
_DIGIT_RUN_RE = re.compile(r"\d(?:[ \-]?\d)*")
_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+")
_POSTAL_RES = (
    re.compile(r"\b\d{1,6}(?:\s+\w+){0,2}\s+(?:street|avenue|road)\b", re.IGNORECASE),
    re.compile(r"\b(?:street|avenue|road)\s+#?\d{1,6}\b", re.IGNORECASE),
    re.compile(r"\bP\.?\s*O\.?\s*Box\s+\d+\b", re.IGNORECASE),
)


def iban_checksum_ok(candidate: str) -> bool:
    """ISO 13616 mod-97 check."""
    rearranged = (candidate[4:] + candidate[:4]).upper()
    try:
        numeric = "".join(str(int(ch, 36)) for ch in rearranged)
    except ValueError:
        return False
    return int(numeric) % 97 == 1


def _digit_count(s: str) -> int:
    return sum(ch.isdigit() for ch in s)


def scan_pii(text: str) -> list[PiiFinding]:
    """All non-overlapping PII findings, leftmost-longest, sorted by offset."""
    candidates: list[tuple[int, int, PiiKind]] = []

    for m in _IBAN_RE.finditer(text):
        if iban_checksum_ok(m.group()):
            candidates.append((m.start(), m.end(), PiiKind.BANK_ACCOUNT))

    for m in _ACCOUNT_CUE_RE.finditer(text):
        window = text[m.end() : m.end() + 40]
        run = _DIGIT_RUN_RE.search(window)
        if run and _digit_count(run.group()) >= 6:
            candidates.append((m.start(), m.end() + run.end(), PiiKind.BANK_ACCOUNT))

    for m in _PHONE_RE.finditer(text):
        if 7 <= _digit_count(m.group()) <= 15:
            candidates.append((m.start(), m.end(), PiiKind.PHONE_NUMBER))

    for m in _EMAIL_RE.finditer(text):
        candidates.append((m.start(), m.end(), PiiKind.EMAIL_ADDRESS))

    for pattern in _POSTAL_RES:
        for m in pattern.finditer(text):
            candidates.append((m.start(), m.end(), PiiKind.POSTAL_ADDRESS))

    # Leftmost-longest wins on overlap.
    candidates.sort(key=lambda c: (c[0], -(c[1] - c[0])))
    findings: list[PiiFinding] = []
    cursor = 0
    for start, end, kind in candidates:
        if start >= cursor:
            findings.append(PiiFinding(kind, start, end, text[start:end]))
            cursor = end
    return findings


class Generator(Protocol):
    def generate(self, request: GeneratorRequest) -> str: ...


class TemplateGenerator:
    """Deterministic canned-reply generator used by tests and the simulator.

    The reply is a pure function of (seed, scam text): same inputs, identical
    bytes out. It deliberately contains no digits, so it can never trip the
    PII scanner.
    """

    _OPENERS = (
        "Dear friend,",
        "Dear Sir or Madam,",
        "Hello,",
        "Good day to you,",
    )
    _INTERESTS = (
        "Thank you for your message about {topic}. I read it with great interest and I "
        "would very much like to proceed.",
        "I was glad to receive your note regarding {topic}. This sounds like a most "
        "promising matter and I am keen to continue.",
        "Your message concerning {topic} reached me safely. I am intrigued and happy "
        "to move forward with this.",
    )
    _QUESTIONS = (
        "Could you kindly explain the next steps in a little more detail?",
        "Would you tell me more about how we should proceed from here?",
        "May I ask what you need from me next, described as plainly as possible?",
    )
    _CLOSERS = (
        "Yours faithfully,",
        "Warm regards,",
        "With thanks,",
    )

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _topic(self, text: str) -> str:
        words = [w.strip(".,;:!?()[]\"'") for w in text.split()]
        words = [w.lower() for w in words if len(w) >= 5 and w.isalpha()]
        if not words:
            return "your proposal"
        unique: list[str] = []
        for w in words:
            if w not in unique:
                unique.append(w)
        unique.sort(key=len, reverse=True)
        picked = unique[:2]
        return " and ".join(picked) if len(picked) > 1 else picked[0]

    def generate(self, request: GeneratorRequest) -> str:
        digest = hashlib.sha256(request.scam_text.encode("utf-8")).hexdigest()
        rng = random.Random(f"{self.seed}:{digest}")
        opener = rng.choice(self._OPENERS)
        interest = rng.choice(self._INTERESTS).format(topic=self._topic(request.scam_text))
        question = rng.choice(self._QUESTIONS)
        closer = rng.choice(self._CLOSERS)
        return f"{opener}\n\n{interest} {question}\n\n{closer}"


class HttpGenerator:
    """Chat-completion JSON endpoint client.

    Sends the preamble as the system turn and the scam text (plus any prior
    exchange) as user/assistant turns; returns the first completion's text.
    """

    def __init__(
        self,
        endpoint_url: str,
        model: str,
        auth_env_var: str | None = None,
        timeout: float = 60.0,
    ):
        self.endpoint_url = endpoint_url
        self.model = model
        self.auth_env_var = auth_env_var
        self.timeout = timeout

    def generate(self, request: GeneratorRequest) -> str:
        messages = [{"role": "system", "content": request.preamble}]
        for turn in request.prior_exchange or ():
            role = "user" if turn.role is Role.SCAMMER else "assistant"
            messages.append({"role": role, "content": turn.text})
        messages.append({"role": "user", "content": request.scam_text})

        headers = {}
        if self.auth_env_var:
            token = os.environ.get(self.auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"

        try:
            resp = requests.post(
                self.endpoint_url,
                json={"model": self.model, "messages": messages},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.Timeout as exc:
            raise GeneratorTimeout(f"generator endpoint timed out after {self.timeout}s") from exc
        except requests.RequestException as exc:
            raise GeneratorError(f"generator transport failure: {exc}") from exc

        if resp.status_code != 200:
            raise EndpointError(resp.status_code)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected completion payload: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("completion content is not a string")
        return content


class RefusalPatternFile:
    """Newline-separated refusal patterns, re-read whenever the file changes."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._mtime: float | None = None
        self._patterns: tuple[str, ...] = DEFAULT_REFUSAL_PATTERNS

    def patterns(self) -> tuple[str, ...]:
        try:
            mtime = self.path.stat().st_mtime
        except OSError:
            return self._patterns
        if mtime != self._mtime:
            lines = [
                line.strip()
                for line in self.path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            self._patterns = tuple(lines) or DEFAULT_REFUSAL_PATTERNS
            self._mtime = mtime
        return self._patterns


@dataclass(frozen=True)
class GuardPolicy:
    max_attempts: int = 3
    refusal_patterns: tuple[str, ...] | None = None
    # Re-send prior thread history to the generator on each turn; default is
    # latest-message-only.
    include_history: bool = False

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class ReplyDraft:
    """An accepted reply body plus the guardrail history that produced it."""

    body: str
    attempts: int
    preamble_level_used: int
    findings_history: tuple[tuple[PiiFinding, ...], ...]
    refusals_seen: int


def _prior_exchange(thread: Thread) -> tuple[ExchangeTurn, ...]:
    turns = []
    for msg in thread.messages[:-1]:
        role = Role.SCAMMER if msg.direction is Direction.INBOUND else Role.US
        turns.append(ExchangeTurn(role, msg.body_text))
    return tuple(turns)


def generate_reply(thread: Thread, generator: Generator, policy: GuardPolicy) -> ReplyDraft:
    """Run the guardrail loop until a clean draft comes out.

    Refusals retry at the same preamble level; a PII leak escalates to level 2
    and stays there. The draft body is the bare generator output: the signature
    and quoted history are composed on top of it at send time.
    """
    latest = thread.latest()
    if latest is None or latest.direction is not Direction.INBOUND:
        raise ValueError("latest thread message must be inbound")
    scam_text = latest.body_text or (latest.body_html or "")
    prior = _prior_exchange(thread) if policy.include_history else None

    level = 1
    refusals = 0
    findings_history: list[tuple[PiiFinding, ...]] = []
    for attempt in range(1, policy.max_attempts + 1):
        request = GeneratorRequest(build_preamble(level), scam_text, prior)
        text = generator.generate(request)
        if detect_refusal(text, policy.refusal_patterns):
            refusals += 1
            continue
        findings = tuple(scan_pii(text))
        findings_history.append(findings)
        if findings:
            level = 2
            continue
        return ReplyDraft(
            body=text,
            attempts=attempt,
            preamble_level_used=level,
            findings_history=tuple(findings_history),
            refusals_seen=refusals,
        )
    raise GuardrailExhausted(policy.max_attempts, refusals, findings_history)
