"""Single-timeline discrete-event loop.

Events fire in nondecreasing time order; equal timestamps fire in the order
they were scheduled.  Nothing here draws random numbers, so a run is fully
determined by what gets scheduled.
"""

from __future__ import annotations

import heapq
import itertools
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from typing import Any

Action = Callable[["EventLoop"], Any]


@dataclass(frozen=True)
class TraceEntry:
    time: int
    seq: int
    label: str

    def line(self) -> str:
        return f"{self.time},{self.seq},{self.label}"


@dataclass(order=True)
class _Event:
    time: int
    seq: int
    label: str = field(compare=False)
    action: Action | None = field(compare=False, default=None)


class EventLoop:
    def __init__(self, start: int = 0):
        self.now = start
        self._queue: list[_Event] = []
        self._seq = itertools.count()
        self.trace: list[TraceEntry] = []

    def schedule(self, time: int, label: str, action: Action | None = None) -> None:
        if time < self.now:
            raise ValueError(f"event {label!r} at {time} is in the past (now {self.now})")
        heapq.heappush(self._queue, _Event(time, next(self._seq), label, action))

    def __len__(self) -> int:
        return len(self._queue)

    def run(self, until: int | None = None) -> list[TraceEntry]:
        while self._queue and (until is None or self._queue[0].time <= until):
            event = heapq.heappop(self._queue)
            self.now = event.time
            self.trace.append(TraceEntry(event.time, event.seq, event.label))
            if event.action is not None:
                event.action(self)
        return self.trace


def run_event_loop(events: Iterable[tuple[int, str] | tuple[int, str, Action]]) -> list[TraceEntry]:
    events = list(events)
    loop = EventLoop(start=min((e[0] for e in events), default=0))
    for event in events:
        loop.schedule(*event)
    return loop.run()
