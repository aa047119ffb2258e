"""Discrete-event core: one logical clock, one ordered event queue.

Time is an unsigned tick count.  Events fire in (tick, insertion seq)
order, so two events scheduled for the same tick run in the order they
were scheduled.  Scheduling into the past is a programming error and
aborts the run.
"""

import heapq
from dataclasses import dataclass


class SimulationError(Exception):
    """Fatal inconsistency inside the simulation core."""


@dataclass(slots=True, frozen=True)
class Event:
    fire_at: int
    seq: int
    target: object
    payload: object


@dataclass(slots=True)
class RunStats:
    events_processed: int
    final_time: int


class Kernel:
    """Event queue plus clock. A dispatch callable consumes events."""

    def __init__(self):
        self._queue = []
        self._seq = 0
        self.now = 0
        self._dispatch = None

    def bind(self, dispatch):
        """Set the callable invoked as dispatch(target, payload).

        Without a bound dispatcher, targets are treated as callables
        and invoked as target(payload).
        """
        self._dispatch = dispatch

    def schedule(self, fire_at: int, target, payload=None) -> int:
        if fire_at < self.now:
            raise SimulationError(
                f"event scheduled in the past: {fire_at} < now {self.now}")
        seq = self._seq
        self._seq = seq + 1
        heapq.heappush(self._queue, (fire_at, seq, target, payload))
        return seq

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, limit: int) -> RunStats:
        """Process events in order until the queue drains or now > limit."""
        queue = self._queue
        dispatch = self._dispatch
        pop = heapq.heappop
        processed = 0
        while queue:
            fire_at, seq, target, payload = queue[0]
            if fire_at > limit:
                break
            pop(queue)
            self.now = fire_at
            if dispatch is None:
                target(payload)
            else:
                dispatch(target, payload)
            processed += 1
        return RunStats(processed, self.now)
