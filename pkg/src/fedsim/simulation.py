"""Pieces shared by the three engines: the learning workload, evaluation cadence, results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Protocol

import numpy as np

from .data import Dataset, PartitionPlan
from .metrics import MetricsRecord
from .models import LearnerSpec, SgdConfig, evaluate, init_model, train_local
from .timing import ClientProfile, Grant, SimEvent, sfl_round_time


class Learning(Protocol):
    """What an engine needs from the learning side.

    Engines only talk to this interface, so scheduling tests can swap in a
    stub whose local update is free.
    """

    def client_count(self) -> int: ...
    def coefficients(self) -> list[float]: ...
    def initial_model(self) -> np.ndarray: ...
    def local_update(self, client_id: int, model: np.ndarray, first_epoch: int, epochs: int) -> np.ndarray: ...
    def evaluate(self, model: np.ndarray) -> tuple[float, float]: ...


@dataclass
class Workload:
    """Client partitions plus learner, trained with seeds derived from ``seed``."""

    spec: LearnerSpec
    sgd: SgdConfig
    train: Dataset
    test: Dataset
    plan: PartitionPlan
    seed: int = 0

    def __post_init__(self) -> None:
        self._shards = [(self.train.features[idx], self.train.labels[idx]) for idx in self.plan.assignments]

    def client_count(self) -> int:
        return self.plan.client_count

    def coefficients(self) -> list[float]:
        return self.plan.coefficients()

    def initial_model(self) -> np.ndarray:
        return init_model(self.spec, self.seed)

    def local_update(self, client_id: int, model: np.ndarray, first_epoch: int, epochs: int) -> np.ndarray:
        x, y = self._shards[client_id]
        return train_local(model, x, y, self.sgd, self.spec, (self.seed, client_id), first_epoch, epochs)

    def evaluate(self, model: np.ndarray) -> tuple[float, float]:
        return evaluate(model, self.test.features, self.test.labels, self.spec)


def relative_slot(profiles: list[ClientProfile], base_epochs: int) -> int:
    """Ticks in one synchronous round with every client running ``base_epochs``."""
    p0 = profiles[0]
    slowest = max(base_epochs * p.compute_time for p in profiles)
    return sfl_round_time(len(profiles), slowest, p0.upload_time, p0.download_time)


@dataclass(frozen=True)
class Budget:
    relative_slots: float = 60.0
    max_rounds: int | None = None  # rounds, trunks or aggregations depending on engine


@dataclass
class AggregationLog:
    iteration: int
    time: int
    client_id: int
    basis: int
    weight: float  # coefficient on the incoming local model
    mu: float | None = None


@dataclass
class RunResult:
    algorithm: str
    model: np.ndarray
    records: list[MetricsRecord]
    events: list[SimEvent]
    grants: list[Grant]
    aggregations: list[AggregationLog] = field(default_factory=list)
    slot_ticks: int = 0

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy


class Checkpoints:
    """Emits a MetricsRecord at every multiple of ``every`` relative slots up to the budget."""

    def __init__(self, learning: Learning, slot_ticks: int, budget: Budget, every: float,
                 algorithm: str, gamma: float | None = None) -> None:
        self.learning = learning
        self.slot = slot_ticks
        self.step = Fraction(str(every)) * slot_ticks
        if self.step <= 0:
            raise ValueError("evaluation cadence must be positive")
        self.horizon = math.floor(Fraction(str(budget.relative_slots)) * slot_ticks)
        self.algorithm = algorithm
        self.gamma = gamma
        self.records: list[MetricsRecord] = []
        self._k = 0

    def _tick(self, k: int) -> int:
        return math.floor(self.step * k)

    def record(self, time: int, model: np.ndarray, iteration: int) -> None:
        loss, acc = self.learning.evaluate(model)
        self.records.append(MetricsRecord(time, time / self.slot, iteration, loss, acc, self.algorithm, self.gamma))

    def before(self, time: int, model_fn: Callable[[], np.ndarray], iteration: int) -> None:
        """Record every checkpoint strictly earlier than ``time`` (and within the horizon)."""
        while self._tick(self._k) < time and self._tick(self._k) <= self.horizon:
            self.record(self._tick(self._k), model_fn(), iteration)
            self._k += 1

    def finish(self, model: np.ndarray, iteration: int, end_time: int | None = None) -> None:
        """Flush checkpoints up to ``end_time`` (default: the horizon) and record the end state."""
        end = self.horizon if end_time is None else min(end_time, self.horizon)
        self.before(end + 1, lambda: model, iteration)
        if not self.records or self.records[-1].sim_time < end:
            self.record(end, model, iteration)
