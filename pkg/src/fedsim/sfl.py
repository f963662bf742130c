"""Synchronous FedAvg: broadcast, local training, sequential uploads, weighted average."""

from __future__ import annotations

import math

from .errors import AggregationError
from .models import COEFFICIENT_SUM_TOL, weighted_sum
from .simulation import Budget, Checkpoints, Learning, RunResult, relative_slot
from .timing import BROADCAST, Channel, ClientProfile, EventKind, EventQueue, SimEvent


def run_fedavg(learning: Learning, profiles: list[ClientProfile], budget: Budget = Budget(),
               local_epochs: int = 1) -> RunResult:
    """Run synchronous rounds until the time budget (or ``budget.max_rounds``) is spent.

    Every client trains ``local_epochs`` from the round's broadcast model. The
    server waits for the slowest client, then collects uploads one at a time in
    client-id order, so a round lasts ``download + slowest pass + M * upload``.
    The global model is evaluated at time zero and after every round.
    """
    m = learning.client_count()
    alphas = learning.coefficients()
    if abs(math.fsum(alphas) - 1.0) > COEFFICIENT_SUM_TOL:
        raise AggregationError(f"client coefficients sum to {math.fsum(alphas)!r}")
    slot = relative_slot(profiles, local_epochs)
    ckpt = Checkpoints(learning, slot, budget, 1.0, "sfl")
    horizon = ckpt.horizon

    model = learning.initial_model()
    queue = EventQueue()
    channel = Channel()
    events: list[SimEvent] = []
    ckpt.record(0, model, 0)

    t0 = 0
    rounds = 0
    while budget.max_rounds is None or rounds < budget.max_rounds:
        if t0 + slot > horizon:
            break
        down = profiles[0].download_time
        channel.reserve(BROADCAST, t0, down)
        for p in profiles:
            queue.push(SimEvent(t0 + down, EventKind.DOWNLOAD_DONE, p.client_id))

        locals_ = [None] * m
        computing = m
        uploads_left = m
        end = None
        while queue:
            for ev in queue.pop_simultaneous():
                events.append(ev)
                cid = ev.client_id
                if ev.kind is EventKind.DOWNLOAD_DONE:
                    locals_[cid] = learning.local_update(cid, model, rounds * local_epochs, local_epochs)
                    queue.push(SimEvent(ev.time + local_epochs * profiles[cid].compute_time,
                                        EventKind.COMPUTE_DONE, cid))
                elif ev.kind is EventKind.COMPUTE_DONE:
                    computing -= 1
                    if computing == 0:
                        start = ev.time
                        for p in profiles:
                            grant = channel.reserve(p.client_id, start, p.upload_time, rounds + 1)
                            queue.push(SimEvent(grant.end, EventKind.UPLOAD_DONE, p.client_id))
                            start = grant.end
                else:
                    uploads_left -= 1
                    if uploads_left == 0:
                        end = ev.time
        model = weighted_sum(locals_, alphas)
        rounds += 1
        ckpt.record(end, model, rounds)
        t0 = end

    return RunResult("sfl", model, ckpt.records, events, channel.grants, slot_ticks=slot)
