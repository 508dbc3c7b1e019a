"""Append-only per-thread event logs: newline-delimited JSON, UTF-8.

Writes are line-atomic; recovery discards a partial trailing line, so any
crash leaves a replayable prefix.
"""

from __future__ import annotations

import hashlib
import json
import re
from datetime import datetime
from pathlib import Path

from .engagement import EngagementEvent, EventKind


def event_to_json(event: EngagementEvent) -> str:
    return json.dumps(
        {
            "seq": event.seq,
            "at": event.at.isoformat(),
            "kind": event.kind.value,
            "payload": dict(event.payload),
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def event_from_json(line: str) -> EngagementEvent:
    data = json.loads(line)
    return EngagementEvent(
        seq=data["seq"],
        at=datetime.fromisoformat(data["at"]),
        kind=EventKind(data["kind"]),
        payload=data["payload"],
    )


def _sanitize(thread_key: str) -> str:
    safe = re.sub(r"[^a-z0-9._-]+", "_", thread_key.lower())
    digest = hashlib.sha1(thread_key.encode("utf-8")).hexdigest()[:8]
    return f"{safe[:60]}-{digest}"


class CorruptLog(Exception):
    """A non-trailing log line failed to parse; the log is not a clean prefix."""


class EventLogStore:
    """One append-only NDJSON file per thread under <data_dir>/threads/."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.threads_dir = self.data_dir / "threads"
        self.threads_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.data_dir / "threads.index"

    def path_for(self, thread_key: str) -> Path:
        return self.threads_dir / f"{_sanitize(thread_key)}.ndjson"

    def append(self, thread_key: str, event: EngagementEvent) -> None:
        path = self.path_for(thread_key)
        new_thread = not path.exists()
        line = event_to_json(event) + "\n"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
        if new_thread:
            with open(self.index_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": thread_key, "file": path.name}) + "\n")
                fh.flush()

    def read(self, thread_key: str) -> list[EngagementEvent]:
        return self.read_file(self.path_for(thread_key))

    def read_file(self, path: Path) -> list[EngagementEvent]:
        if not path.exists():
            return []
        raw = path.read_bytes().decode("utf-8", errors="replace")
        lines = raw.split("\n")
        trailing_partial = lines and lines[-1] != ""
        if not trailing_partial:
            lines = lines[:-1]
        events: list[EngagementEvent] = []
        for i, line in enumerate(lines):
            if not line:
                continue
            last = i == len(lines) - 1
            try:
                events.append(event_from_json(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                if last:
                    break  # partial trailing line from a crash: discard
                raise CorruptLog(f"{path}:{i + 1}: {exc}") from exc
        return events

    def thread_keys(self) -> list[str]:
        if not self.index_path.exists():
            return []
        keys: list[str] = []
        seen = set()
        for line in self.index_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                continue  # partial trailing index line
            key = entry.get("key")
            if key and key not in seen:
                seen.add(key)
                keys.append(key)
        return keys

    def read_all(self) -> dict[str, list[EngagementEvent]]:
        return {key: self.read(key) for key in self.thread_keys()}
