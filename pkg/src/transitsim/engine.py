"""Deterministic discrete-event engine: clock, event queue, seeded RNG streams.

Time is integer seconds since the start of the service day (0 = 00:00:00).
All stochasticity flows through named :class:`RngStream` objects so that
adding a consumer of one stream never perturbs draws on another.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import BadBoundsError, PastEventError

DEFAULT_HORIZON_S = 105_000  # ~29 h, allows post-midnight tap-outs


def _derive_seed(seed: int, stream_id: str) -> int:
    """Stable 128-bit seed for a named sub-stream of a master seed."""
    digest = hashlib.sha256(f"{seed}:{stream_id}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


class RngStream:
    """A named, independently seeded PCG64 generator.

    Same (seed, stream_id) yields the identical sample sequence on every
    run and platform.
    """

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        self.rng = np.random.Generator(np.random.PCG64(_derive_seed(seed, stream_id)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


def sample_truncated_normal(
    stream: RngStream, mean: float, sd: float, lo: float, hi: float
) -> float:
    """Draw from normal(mean, sd) conditioned on [lo, hi].

    Rejection sampling capped at 1,000 attempts, then clamp; adequate for
    the mild (~2 sigma) truncations used in this model.  sd below 1e-9 is
    treated as degenerate and returns clamp(mean, lo, hi).
    """
    if lo >= hi:
        raise BadBoundsError(f"empty truncation interval [{lo}, {hi}]")
    if sd <= 1e-9:
        return min(max(mean, lo), hi)
    rng = stream.rng
    for _ in range(1000):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return x
    return min(max(mean, lo), hi)


@dataclass(slots=True)
class Event:
    """A scheduled occurrence; (fire_time, seq) is a strict total order."""

    fire_time: int
    kind: str
    target: Any = None
    payload: Any = None
    seq: int = -1  # assigned at schedule time


class Engine:
    """Simulation clock plus event priority queue.

    Ties at equal fire_time resolve in insertion order (monotone counter),
    so the fire sequence is the stable sort of events by fire time.
    """

    def __init__(
        self,
        horizon_s: int = DEFAULT_HORIZON_S,
        handler: Optional[Callable[[Event], None]] = None,
        trace_hook: Optional[Callable[[Event], None]] = None,
    ):
        self.now = 0
        self.horizon_s = horizon_s
        self.handler = handler
        self.trace_hook = trace_hook
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, event: Event) -> None:
        if event.fire_time < self.now:
            raise PastEventError(
                f"event {event.kind!r} at t={event.fire_time} scheduled at now={self.now}"
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_time, event.seq, event))

    def schedule_at(self, fire_time: int, kind: str, target: Any = None, payload: Any = None) -> Event:
        event = Event(fire_time, kind, target, payload)
        self.schedule(event)
        return event

    def run_until(self, t_end: int) -> int:
        """Fire every event with fire_time <= t_end in order; set now = t_end.

        t_end is capped at the horizon, keeping the clock within bounds.
        Returns the number of events fired.
        """
        if t_end < self.now:
            raise ValueError(f"run_until({t_end}) before now={self.now}")
        t_end = min(t_end, self.horizon_s)
        fired = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_time, _, event = heapq.heappop(heap)
            self.now = fire_time
            if self.trace_hook is not None:
                self.trace_hook(event)
            if self.handler is not None:
                self.handler(event)
            fired += 1
        self.now = t_end
        return fired

    def run(self) -> int:
        """Run to the horizon."""
        return self.run_until(self.horizon_s)
