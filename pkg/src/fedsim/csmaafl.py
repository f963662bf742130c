"""Asynchronous FL with slot-request scheduling and staleness-decayed aggregation.

Clients request an upload slot as soon as their local pass finishes. The
server serves requests first-come (older last upload wins a tie), blends the
upload into the global model with weight ``min(1, mu / (gamma * j * (j - i)))``
and returns the new model to that client only.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, StalenessError
from .models import convex_blend
from .simulation import AggregationLog, Budget, Checkpoints, Learning, RunResult, relative_slot
from .timing import BROADCAST, Channel, ClientProfile, EventKind, EventQueue, SimEvent

SLOT = "slot"
RANDOMIZED_TRUNK = "randomized-trunk"
SCHEDULERS = (SLOT, RANDOMIZED_TRUNK)


def staleness_weight(j: int, i: int, mu: float, gamma: float) -> float:
    """Coefficient on the local model uploaded at iteration ``j`` that was trained from model ``i``."""
    if j < 1 or i < 0:
        raise StalenessError(f"invalid iteration indices j={j}, i={i}")
    if j <= i:
        raise StalenessError(f"iteration gap j - i = {j - i} must be positive (j={j}, i={i})")
    if gamma <= 0 or mu <= 0:
        raise StalenessError(f"gamma and mu must be positive, got gamma={gamma}, mu={mu}")
    return min(1.0, mu / (gamma * j * (j - i)))


@dataclass
class AggregationState:
    model: np.ndarray
    mu: float
    gamma: float
    rho: float = 0.9
    iteration: int = 0  # aggregations performed; the next one is iteration + 1

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.mu <= 0:
            raise ConfigError(f"initial moving average must be positive, got {self.mu}")
        if not 0 < self.rho < 1:
            raise ConfigError(f"moving-average factor must lie in (0, 1), got {self.rho}")

    def aggregate(self, local: np.ndarray, basis: int) -> float:
        """Blend one upload into the global model; returns the local model's weight."""
        j = self.iteration + 1
        weight = staleness_weight(j, basis, self.mu, self.gamma)
        self.model = convex_blend(self.model, local, 1.0 - weight)
        self.mu = update_moving_average(self.mu, j - basis, self.rho)
        self.iteration = j
        return weight


def update_moving_average(mu: float, gap: int, rho: float) -> float:
    if gap < 1:
        raise StalenessError(f"observed gap must be >= 1, got {gap}")
    return rho * mu + (1.0 - rho) * gap


def adapt_local_iterations(compute_times: Sequence[int], base: int = 1, cap: int = 8) -> list[int]:
    """Epochs per client so that each pass takes roughly the median client's time."""
    if any(t <= 0 for t in compute_times):
        raise ConfigError("compute times must be positive")
    median = statistics.median(compute_times)
    return [min(cap, max(1, math.floor(median / t * base + 0.5))) for t in compute_times]


def randomized_trunk_schedule(clients: int, trunk_index: int, seed: int) -> list[int]:
    """Seeded upload order for one trunk."""
    if clients < 1:
        raise ConfigError("need at least one client")
    rng = np.random.default_rng([int(seed), 0x7472, int(trunk_index)])
    return [int(c) for c in rng.permutation(clients)]


class Status(enum.Enum):
    COMPUTING = "computing"
    AWAITING_SLOT = "awaiting-slot"
    UPLOADING = "uploading"
    DOWNLOADING = "downloading"


@dataclass
class ClientRuntimeState:
    client_id: int
    basis: int = 0  # index of the global model the client trains from
    last_upload_slot: int = 0
    local: np.ndarray | None = None
    inbox: np.ndarray | None = None
    status: Status = Status.DOWNLOADING
    epochs_done: int = 0
    uploads: list[int] = field(default_factory=list)


def run_csmaafl(learning: Learning, profiles: list[ClientProfile], gamma: float = 0.2, rho: float = 0.9,
                mu0: float | None = None, scheduler: str = SLOT, seed: int = 0, budget: Budget = Budget(),
                base_epochs: int = 1, eval_every: float = 1.0) -> RunResult:
    """Event-driven asynchronous run.

    ``profiles[m].local_epochs`` is the (possibly adapted) epoch count of each
    pass. Each channel grant carries the upload and then the unicast of the
    fresh aggregate back to the uploader. With ``scheduler="randomized-trunk"``
    the slot protocol is replaced by a seeded upload order per trunk, each
    client uploading once per trunk.
    """
    if scheduler not in SCHEDULERS:
        raise ConfigError(f"unknown scheduler {scheduler!r}; expected one of {SCHEDULERS}")
    m = learning.client_count()
    slot = relative_slot(profiles, base_epochs)
    ckpt = Checkpoints(learning, slot, budget, eval_every, "csmaafl", gamma)
    horizon = ckpt.horizon

    state = AggregationState(learning.initial_model(), float(m if mu0 is None else mu0), gamma, rho)
    clients = [ClientRuntimeState(p.client_id) for p in profiles]
    queue = EventQueue()
    channel = Channel()
    events: list[SimEvent] = []
    logs: list[AggregationLog] = []

    down = profiles[0].download_time
    channel.reserve(BROADCAST, 0, down)
    for c in clients:
        c.inbox = state.model
        queue.push(SimEvent(down, EventKind.DOWNLOAD_DONE, c.client_id))

    order: list[int] = []
    trunk = 0

    def slot_ticks(cid: int) -> int:
        return profiles[cid].upload_time + profiles[cid].download_time

    def start_transfer(cid: int, now: int) -> None:
        clients[cid].status = Status.UPLOADING
        queue.push(SimEvent(now + profiles[cid].upload_time, EventKind.UPLOAD_DONE, cid))
        queue.push(SimEvent(now + slot_ticks(cid), EventKind.DOWNLOAD_DONE, cid))

    stop = False
    while queue and not stop:
        now = queue.peek().time
        if now > horizon:
            break
        ckpt.before(now, lambda: state.model, state.iteration)
        for ev in queue.pop_simultaneous():
            events.append(ev)
            c = clients[ev.client_id]
            p = profiles[ev.client_id]
            if ev.kind is EventKind.DOWNLOAD_DONE:
                c.status = Status.COMPUTING
                c.local = learning.local_update(c.client_id, c.inbox, c.epochs_done, p.local_epochs)
                c.epochs_done += p.local_epochs
                queue.push(SimEvent(ev.time + p.pass_time, EventKind.COMPUTE_DONE, c.client_id))
            elif ev.kind is EventKind.COMPUTE_DONE:
                c.status = Status.AWAITING_SLOT
                if scheduler == SLOT:
                    channel.request(c.client_id, ev.time, c.last_upload_slot)
            else:
                weight = state.aggregate(c.local, c.basis)
                logs.append(AggregationLog(state.iteration, ev.time, c.client_id, c.basis, weight, state.mu))
                c.last_upload_slot = c.basis = state.iteration
                c.uploads.append(state.iteration)
                c.inbox = state.model
                c.status = Status.DOWNLOADING
                if budget.max_rounds is not None and state.iteration >= budget.max_rounds:
                    stop = True
                    break

        if stop or not channel.is_free(now):
            continue
        if scheduler == SLOT:
            winner = channel.grant_next(now, slot_ticks, state.iteration + 1)
            if winner is not None:
                start_transfer(winner, now)
        else:
            if not order:
                order = randomized_trunk_schedule(m, trunk, seed)
                trunk += 1
            nxt = order[0]
            if clients[nxt].status is Status.AWAITING_SLOT:
                order.pop(0)
                channel.reserve(nxt, now, slot_ticks(nxt), state.iteration + 1)
                start_transfer(nxt, now)

    ckpt.finish(state.model, state.iteration, events[-1].time if stop else None)
    return RunResult("csmaafl", state.model, ckpt.records, events, channel.grants, logs, slot)


def with_adapted_epochs(profiles: Sequence[ClientProfile], base: int = 1, cap: int = 8) -> list[ClientProfile]:
    epochs = adapt_local_iterations([p.compute_time for p in profiles], base, cap)
    return [replace(p, local_epochs=e) for p, e in zip(profiles, epochs)]
