"""Baseline asynchronous FL whose per-iteration blend weights reproduce FedAvg.

One trunk uploads every client once, in a fixed schedule, each upload blended
into the global model with a solved coefficient. The coefficients come from a
backward recursion so the trunk's result equals the synchronous weighted sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError, SolverError
from .models import convex_blend
from .simulation import AggregationLog, Budget, Checkpoints, Learning, RunResult, relative_slot
from .timing import BROADCAST, Channel, ClientProfile, EventKind, EventQueue, SimEvent

RECONSTRUCTION_TOL = 1e-10


@dataclass(frozen=True)
class BetaSchedule:
    """``betas[k]`` weighs the global model when ``schedule[k]`` uploads (0-based k)."""

    schedule: tuple[int, ...]
    betas: tuple[Real, ...]

    def reconstruct(self) -> list[Real]:
        """Per-client effective coefficient implied by the betas, indexed by client id."""
        m = len(self.schedule)
        alphas: list[Real] = [0] * m
        tail = 1
        for k in range(m - 1, -1, -1):
            alphas[self.schedule[k]] = (1 - self.betas[k]) * tail
            tail = tail * self.betas[k]
        return alphas


def _check_permutation(schedule: Sequence[int], m: int) -> tuple[int, ...]:
    schedule = tuple(int(c) for c in schedule)
    if sorted(schedule) != list(range(m)):
        raise ConfigError(f"schedule {list(schedule)} is not a permutation of clients 0..{m - 1}")
    return schedule


def solve_betas(alphas: Sequence[Real], schedule: Sequence[int]) -> BetaSchedule:
    """Backward recursion for the blend weights.

    Works on floats or :class:`fractions.Fraction` (exact). The first weight is
    forced to zero: with coefficients summing to one the initial global model
    must carry no weight, and the computed value is only checked against that.
    """
    m = len(alphas)
    if m == 0:
        raise ConfigError("no client coefficients given")
    schedule = _check_permutation(schedule, m)
    if any(not 0 < a <= 1 for a in alphas):
        raise ConfigError(f"coefficients must lie in (0, 1], got {list(alphas)}")
    total = math.fsum(float(a) for a in alphas)
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"coefficients sum to {total!r}, expected 1")

    betas: list[Real] = [0] * m
    tail = 1  # product of betas after position k
    for k in range(m - 1, -1, -1):
        if tail == 0:
            raise SolverError(f"running product vanished before position {k + 1} of {m}")
        betas[k] = 1 - alphas[schedule[k]] / tail
        tail = tail * betas[k]

    if abs(betas[0]) > RECONSTRUCTION_TOL:
        raise NumericError(f"first blend weight {betas[0]!r} should vanish")
    betas[0] = type(betas[0])(0)
    if any(b < 0 or b >= 1 for b in betas):
        raise SolverError(f"blend weights {betas} leave [0, 1)")

    result = BetaSchedule(schedule, tuple(betas))
    worst = max(abs(float(r) - float(a)) for r, a in zip(result.reconstruct(), alphas))
    if worst > RECONSTRUCTION_TOL:
        raise NumericError(f"reconstructed coefficients deviate by {worst:.3e}")
    return result


def effective_coefficients(alphas: Sequence[float], schedule: Sequence[int]) -> tuple[list[float], float]:
    """Weights left on each client after one trunk of blending with raw sample shares.

    Blending ``w <- (1 - a) w + a w_local`` in schedule order leaves the client
    at position k with ``a_k * prod_{l>k} (1 - a_l)``. Returns those weights by
    client id plus the weight remaining on the starting model.
    """
    m = len(alphas)
    schedule = _check_permutation(schedule, m)
    weights = [0.0] * m
    tail = 1.0
    for k in range(m - 1, -1, -1):
        a = alphas[schedule[k]]
        weights[schedule[k]] = a * tail
        tail *= 1 - a
    return weights, tail


def fastest_first(profiles: Sequence[ClientProfile]) -> list[int]:
    return [p.client_id for p in sorted(profiles, key=lambda p: (p.pass_time, p.client_id))]


def run_baseline_afl(learning: Learning, profiles: list[ClientProfile], schedule: Sequence[int] | None = None,
                     budget: Budget = Budget(), local_epochs: int = 1, eval_every: float = 1.0) -> RunResult:
    """Trunk-by-trunk asynchronous aggregation with solved blend weights.

    Each trunk broadcasts the global model, every client trains once from it,
    and uploads follow ``schedule`` (fastest first by default), one at a time
    whenever the channel is idle and the next client has finished. Each upload
    is followed by the unicast of the fresh aggregate to the uploader, except
    the trunk's last, after which the next broadcast starts. Clients ignore the
    unicast model; they only train from trunk broadcasts.
    """
    m = learning.client_count()
    schedule = _check_permutation(fastest_first(profiles) if schedule is None else schedule, m)
    plan = solve_betas(learning.coefficients(), schedule)
    slot = relative_slot(profiles, local_epochs)
    ckpt = Checkpoints(learning, slot, budget, eval_every, "afl-baseline")
    horizon = ckpt.horizon
    down = profiles[0].download_time

    model = learning.initial_model()
    queue = EventQueue()
    channel = Channel()
    events: list[SimEvent] = []
    logs: list[AggregationLog] = []
    locals_: list[np.ndarray | None] = [None] * m
    ready = [False] * m
    j = 0
    trunk = 0
    position = 0  # index into schedule of the next upload
    broadcast_end = down

    def start_trunk(now: int) -> None:
        nonlocal broadcast_end
        broadcast_end = channel.reserve(BROADCAST, now, down, j + 1).end
        snapshot = model
        for p in profiles:
            ready[p.client_id] = False
            locals_[p.client_id] = learning.local_update(p.client_id, snapshot, trunk * local_epochs, local_epochs)
            queue.push(SimEvent(now + down, EventKind.DOWNLOAD_DONE, p.client_id))

    start_trunk(0)
    stop = False
    while queue and not stop:
        now = queue.peek().time
        if now > horizon:
            break
        ckpt.before(now, lambda: model, j)
        for ev in queue.pop_simultaneous():
            events.append(ev)
            cid = ev.client_id
            if ev.kind is EventKind.DOWNLOAD_DONE:
                if ev.time == broadcast_end:
                    queue.push(SimEvent(ev.time + local_epochs * profiles[cid].compute_time,
                                        EventKind.COMPUTE_DONE, cid))
            elif ev.kind is EventKind.COMPUTE_DONE:
                ready[cid] = True
            else:
                j += 1
                k = j - trunk * m - 1
                model = convex_blend(model, locals_[cid], plan.betas[k])
                logs.append(AggregationLog(j, ev.time, cid, trunk * m, 1 - float(plan.betas[k])))
                if k == m - 1:
                    trunk += 1
                    position = 0
                    if budget.max_rounds is not None and trunk >= budget.max_rounds:
                        stop = True
                        break
                    start_trunk(ev.time)

        if not stop and position < m and channel.is_free(now):
            nxt = schedule[position]
            if ready[nxt]:
                last = position == m - 1
                p = profiles[nxt]
                grant = channel.reserve(nxt, now, p.upload_time + (0 if last else p.download_time), j + 1)
                queue.push(SimEvent(now + p.upload_time, EventKind.UPLOAD_DONE, nxt))
                if not last:
                    queue.push(SimEvent(grant.end, EventKind.DOWNLOAD_DONE, nxt))
                position += 1

    end = events[-1].time if stop else None
    ckpt.finish(model, j, end)
    return RunResult("afl-baseline", model, ckpt.records, events, channel.grants, logs, slot)
