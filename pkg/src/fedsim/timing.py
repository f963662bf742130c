"""Integer-tick event clock, the shared TDMA channel and completion-time formulas."""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable

from .errors import ConfigError, SchedulerError, SimulationComplete


@dataclass(frozen=True)
class ClientProfile:
    """Static timing facts of one client, all in integer ticks."""

    client_id: int
    compute_time: int  # one local epoch
    upload_time: int
    download_time: int
    local_epochs: int = 1

    def __post_init__(self) -> None:
        for name in ("compute_time", "upload_time", "download_time"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigError(f"client {self.client_id}: {name} must be a positive integer tick count, got {value!r}")
        if self.local_epochs < 1:
            raise ConfigError(f"client {self.client_id}: local_epochs must be >= 1")

    @property
    def pass_time(self) -> int:
        """Duration of one local-training pass with this client's epoch count."""
        return self.local_epochs * self.compute_time


class EventKind(enum.IntEnum):
    # value order is the tie-break order at equal timestamps
    UPLOAD_DONE = 0
    DOWNLOAD_DONE = 1
    COMPUTE_DONE = 2

    @property
    def label(self) -> str:
        return {0: "UploadDone", 1: "DownloadDone", 2: "ComputeDone"}[self.value]


@dataclass(frozen=True, order=True)
class SimEvent:
    time: int
    kind: EventKind
    client_id: int


class EventQueue:
    """Min-heap of :class:`SimEvent` ordered by (time, kind, client_id)."""

    def __init__(self, events: Iterable[SimEvent] = ()) -> None:
        self._heap: list[SimEvent] = list(events)
        heapq.heapify(self._heap)
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, event: SimEvent) -> None:
        if event.time < self.now:
            raise SchedulerError(f"event {event} scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, event)

    def peek(self) -> SimEvent | None:
        return self._heap[0] if self._heap else None

    def advance(self) -> SimEvent:
        """Pop the earliest event and move the clock to it."""
        if not self._heap:
            raise SimulationComplete("event queue is empty")
        event = heapq.heappop(self._heap)
        self.now = event.time
        return event

    def pop_simultaneous(self) -> list[SimEvent]:
        """Pop every event sharing the earliest timestamp, in tie order."""
        batch = [self.advance()]
        while self._heap and self._heap[0].time == batch[0].time:
            batch.append(heapq.heappop(self._heap))
        return batch


@dataclass(frozen=True)
class Request:
    client_id: int
    request_time: int
    last_upload_slot: int


@dataclass(frozen=True)
class Grant:
    """One exclusive channel reservation, ``[start, end)``."""

    client_id: int
    start: int
    end: int
    slot: int
    request: Request | None
    competitors: tuple[Request, ...] = ()


@dataclass
class Channel:
    """Single TDMA channel carrying both uploads and downloads.

    Pending slot requests are served first-come; simultaneous requests go to
    the client whose last upload slot is oldest, then to the lowest id.
    """

    busy_until: int = 0
    pending: dict[int, Request] = field(default_factory=dict)
    grants: list[Grant] = field(default_factory=list)

    def request(self, client_id: int, now: int, last_upload_slot: int) -> None:
        if client_id in self.pending:
            raise SchedulerError(f"client {client_id} already has a pending slot request")
        self.pending[client_id] = Request(client_id, now, last_upload_slot)

    @staticmethod
    def priority(request: Request, current_slot: int) -> tuple[int, int, int]:
        return (request.request_time, -(current_slot - request.last_upload_slot), request.client_id)

    def is_free(self, now: int) -> bool:
        return self.busy_until <= now

    def grant_next(self, now: int, duration: int | Callable[[int], int], current_slot: int = 0) -> int | None:
        """Grant the channel to the highest-priority pending client, if free.

        ``duration`` is a tick count or a function of the winning client id.
        """
        if not self.pending or not self.is_free(now):
            return None
        winner = min(self.pending.values(), key=lambda r: self.priority(r, current_slot))
        competitors = tuple(r for r in self.pending.values() if r is not winner)
        del self.pending[winner.client_id]
        ticks = duration(winner.client_id) if callable(duration) else duration
        self._reserve(Grant(winner.client_id, now, now + ticks, current_slot, winner, competitors))
        return winner.client_id

    def reserve(self, client_id: int, now: int, duration: int, slot: int = 0) -> Grant:
        """Unconditional reservation (broadcasts, scheduled uploads)."""
        if not self.is_free(now):
            raise SchedulerError(f"channel busy until {self.busy_until}, reservation at {now}")
        grant = Grant(client_id, now, now + duration, slot, None)
        self._reserve(grant)
        return grant

    def _reserve(self, grant: Grant) -> None:
        if grant.end <= grant.start:
            raise SchedulerError(f"empty reservation {grant}")
        self.busy_until = grant.end
        self.grants.append(grant)


BROADCAST = -1  # client id used for a transmission received by all clients


def sfl_round_time(clients: int, slowest_compute: int, upload_time: int, download_time: int):
    """One synchronous round: broadcast, slowest computation, then every upload in turn."""
    return download_time + slowest_compute + clients * upload_time


def afl_trunk_time_bounds(clients: int, compute_time, slowdown, upload_time, download_time):
    """(lower, upper) time for every client to upload once asynchronously.

    Fastest client takes ``compute_time``, slowest ``slowdown * compute_time``.
    """
    if slowdown < 1:
        raise ConfigError(f"slowdown factor must be >= 1, got {slowdown}")
    transfers = clients * download_time + clients * upload_time
    return transfers + compute_time, transfers + slowdown * compute_time


def write_trace(events: Iterable[SimEvent], out: IO[str]) -> None:
    """Tab-separated ``time kind client_id`` lines."""
    for ev in events:
        out.write(f"{ev.time}\t{ev.kind.label}\t{ev.client_id}\n")
