"""Clock abstraction: virtual clock for simulation, real clock for service mode.

Both expose the same interface (now / schedule / cancel) so the runtime is
oblivious to which one drives it.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from datetime import datetime, timezone
from typing import Callable, Protocol


class TimerHandle:
    __slots__ = ("at", "callback", "cancelled")

    def __init__(self, at: datetime, callback: Callable[[datetime], None]):
        self.at = at
        self.callback = callback
        self.cancelled = False


class Clock(Protocol):
    def now(self) -> datetime: ...

    def schedule(self, at: datetime, callback: Callable[[datetime], None]) -> TimerHandle: ...

    def cancel(self, handle: TimerHandle) -> None: ...


class VirtualClock:
    """Deterministic event-queue clock; time advances only when stepped."""

    def __init__(self, start: datetime):
        self._now = start
        self._heap: list[tuple[datetime, int, TimerHandle]] = []
        self._counter = itertools.count()

    def now(self) -> datetime:
        return self._now

    def schedule(self, at: datetime, callback: Callable[[datetime], None]) -> TimerHandle:
        handle = TimerHandle(at, callback)
        heapq.heappush(self._heap, (at, next(self._counter), handle))
        return handle

    def cancel(self, handle: TimerHandle) -> None:
        handle.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, h in self._heap if not h.cancelled)

    def advance(self) -> bool:
        """Fire the earliest pending timer; False when none are left.

        Virtual time never goes backwards: firing a timer moves now() to the
        timer's instant.
        """
        while self._heap:
            at, _, handle = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self._now = max(self._now, at)
            handle.callback(self._now)
            return True
        return False


class RealClock:
    """Wall-clock scheduler backed by a single worker thread."""

    def __init__(self):
        self._heap: list[tuple[datetime, int, TimerHandle]] = []
        self._counter = itertools.count()
        self._cond = threading.Condition()
        self._stopped = False
        self._thread: threading.Thread | None = None

    def now(self) -> datetime:
        return datetime.now(timezone.utc).replace(microsecond=0)

    def schedule(self, at: datetime, callback: Callable[[datetime], None]) -> TimerHandle:
        handle = TimerHandle(at, callback)
        with self._cond:
            heapq.heappush(self._heap, (at, next(self._counter), handle))
            self._cond.notify()
        return handle

    def cancel(self, handle: TimerHandle) -> None:
        with self._cond:
            handle.cancelled = True
            self._cond.notify()

    def start(self) -> None:
        self._stopped = False
        self._thread = threading.Thread(target=self._run, name="scambait-timers", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        with self._cond:
            self._stopped = True
            self._cond.notify()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def _run(self) -> None:
        while True:
            with self._cond:
                if self._stopped:
                    return
                if not self._heap:
                    self._cond.wait()
                    continue
                at, _, handle = self._heap[0]
                if handle.cancelled:
                    heapq.heappop(self._heap)
                    continue
                wait_s = (at - self.now()).total_seconds()
                if wait_s > 0:
                    self._cond.wait(timeout=min(wait_s, 1.0))
                    continue
                heapq.heappop(self._heap)
            if not handle.cancelled:
                handle.callback(self.now())
