"""Deterministic discrete-event engine with reliable FIFO links.

Events are ordered by ``(due_time, priority, sequence)``. Priorities put
message deliveries ahead of environment injections, bid deadlines and the
world step that share the same tick, so a tick always sees every message
that arrived on it.
"""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .messaging import Envelope

__all__ = [
    "SimClock",
    "LatencyModel",
    "EventQueue",
    "Event",
    "Network",
    "RoutingError",
    "SimulationTimeout",
    "DELIVERY",
    "ENVIRONMENT",
    "DEADLINE",
    "WORLD",
]

log = logging.getLogger(__name__)

DELIVERY, ENVIRONMENT, DEADLINE, WORLD = range(4)


class RoutingError(KeyError):
    pass


class SimulationTimeout(RuntimeError):
    def __init__(self, message: str, stuck: Optional[list[str]] = None):
        super().__init__(message)
        self.stuck = list(stuck or [])


class SimClock:
    def __init__(self) -> None:
        self.now = 0

    def advance(self, t: int) -> None:
        if t < self.now:
            raise RuntimeError(f"clock cannot go back from {self.now} to {t}")
        self.now = t


@dataclass
class LatencyModel:
    """Per-hop latency drawn uniformly from ``[base, base + jitter]``."""

    base: int = 1
    jitter: int = 0
    seed: int = 0
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.base < 0 or self.jitter < 0:
            raise ValueError("latency base and jitter must be non-negative")
        self._rng = random.Random(self.seed)

    def sample(self) -> int:
        if self.jitter == 0:
            return self.base
        return self.base + self._rng.randint(0, self.jitter)

    @property
    def max_latency(self) -> int:
        return self.base + self.jitter


@dataclass(order=True)
class Event:
    time: int
    priority: int
    seq: int
    action: Callable[[], None] = field(compare=False)
    label: str = field(default="", compare=False)


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def push(
        self, time: int, action: Callable[[], None], priority: int = WORLD, label: str = ""
    ) -> Event:
        event = Event(time, priority, next(self._seq), action, label)
        heapq.heappush(self._heap, event)
        return event

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None

    def pop(self) -> Event:
        if not self._heap:
            raise IndexError("pop from empty event queue")
        return heapq.heappop(self._heap)


class Network:
    """Clock, event queue and message routing for one run.

    Every delivered envelope is appended to :attr:`delivered` in delivery
    order; that list is the run's trace.
    """

    def __init__(self, latency: Optional[LatencyModel] = None) -> None:
        self.latency = latency or LatencyModel()
        self.clock = SimClock()
        self.queue = EventQueue()
        self.delivered: list[Envelope] = []
        self._handlers: dict[str, Callable[[Envelope], None]] = {}
        self._link_last: dict[tuple[str, str], int] = {}
        self.diagnose: Callable[[], list[str]] = lambda: []

    @property
    def now(self) -> int:
        return self.clock.now

    def register(self, agent_id: str, handler: Callable[[Envelope], None]) -> None:
        self._handlers[agent_id] = handler

    def knows(self, agent_id: str) -> bool:
        return agent_id in self._handlers

    def send(self, envelope: Envelope, latency: Optional[LatencyModel] = None) -> Envelope:
        """Schedule delivery and return the envelope stamped with its delivery time."""
        for agent_id in (envelope.sender, envelope.receiver):
            if agent_id not in self._handlers:
                raise RoutingError(f"unknown agent {agent_id!r}")
        model = latency or self.latency
        link = (envelope.sender, envelope.receiver)
        due = envelope.sent_at + model.sample()
        # Same-link messages never overtake one another.
        due = max(due, self._link_last.get(link, due))
        self._link_last[link] = due
        stamped = dataclasses.replace(envelope, delivered_at=due)
        self.queue.push(due, lambda: self._deliver(stamped), DELIVERY, f"deliver {stamped.msg_id}")
        return stamped

    def _deliver(self, envelope: Envelope) -> None:
        self.delivered.append(envelope)
        self._handlers[envelope.receiver](envelope)

    def schedule(
        self, time: int, action: Callable[[], None], priority: int = WORLD, label: str = ""
    ) -> Event:
        if time < self.clock.now:
            raise ValueError(f"cannot schedule at {time}, clock is at {self.clock.now}")
        return self.queue.push(time, action, priority, label)

    def run_until_quiescent(self, max_ticks: int = 10_000) -> int:
        """Process events until none remain and return the final clock."""
        while self.queue:
            nxt = self.queue.peek()
            assert nxt is not None
            if nxt.time > max_ticks:
                stuck = self.diagnose()
                raise SimulationTimeout(
                    f"exceeded {max_ticks} ticks with {len(self.queue)} pending "
                    f"events; open conversations: {', '.join(stuck) or 'none'}",
                    stuck,
                )
            event = self.queue.pop()
            self.clock.advance(event.time)
            event.action()
        return self.clock.now
