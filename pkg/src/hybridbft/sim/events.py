"""Single-threaded discrete-event loop over integer nanoseconds."""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def ms(x: float) -> int:
    return int(round(x * NS_PER_MS))


def sec(x: float) -> int:
    return int(round(x * NS_PER_S))


@dataclass(order=True)
class Event:
    time: int
    seq: int
    target: Any = field(compare=False, default=None)
    payload: Any = field(compare=False, default=None)


class Simulator:
    """Heap of (time, seq) ordered callbacks.

    Every processed event is folded into ``trace_digest`` (time, seq and the
    callback's qualified name), so two runs can be compared event by event.
    """

    def __init__(self, record_trace: bool = True):
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.processed = 0
        self._hasher = hashlib.blake2b(digest_size=16) if record_trace else None

    def schedule(self, t: int, fn: Callable, *args) -> int:
        if t < self.now:
            raise ValueError(f"event scheduled in the past: {t} < {self.now}")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (t, seq, fn, args))
        return seq

    def after(self, dt: int, fn: Callable, *args) -> int:
        return self.schedule(self.now + dt, fn, *args)

    def pending(self) -> int:
        return len(self._heap)

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def run(self, until: int | None = None, stop: Callable[[], bool] | None = None) -> int:
        heap = self._heap
        while heap:
            if until is not None and heap[0][0] > until:
                self.now = until
                break
            t, seq, fn, args = heapq.heappop(heap)
            self.now = t
            if self._hasher is not None:
                self._hasher.update(f"{t}:{seq}:{fn.__qualname__};".encode())
            fn(*args)
            self.processed += 1
            if stop is not None and stop():
                break
        return self.processed

    @property
    def trace_digest(self) -> str:
        return self._hasher.hexdigest() if self._hasher is not None else ""
