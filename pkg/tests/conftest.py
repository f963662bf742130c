from __future__ import annotations

import numpy as np
import pytest

from fedsim.data import partition_iid, synth_blobs
from fedsim.models import LearnerSpec, SgdConfig
from fedsim.simulation import Workload
from fedsim.timing import ClientProfile

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class StubLearning:
    """Learning side with free local updates, for scheduling and aggregation tests.

    ``local_update`` returns the received model unless ``drift`` is set, in
    which case client m adds ``drift[m]`` (so uploads are distinguishable).
    """

    def __init__(self, clients: int, dim: int = 3, coefficients=None, drift=None, seed: int = 0):
        self.m = clients
        self.dim = dim
        self._coef = coefficients or [1.0 / clients] * clients
        self.drift = drift
        self.w0 = np.random.default_rng(seed).standard_normal(dim)
        self.updates: list[tuple[int, int, int]] = []
        self.received: list[np.ndarray] = []

    def client_count(self):
        return self.m

    def coefficients(self):
        return list(self._coef)

    def initial_model(self):
        return self.w0.copy()

    def local_update(self, client_id, model, first_epoch, epochs):
        self.updates.append((client_id, first_epoch, epochs))
        self.received.append(model.copy())
        if self.drift is None:
            return model.copy()
        return model + self.drift[client_id]

    def evaluate(self, model):
        return float(np.abs(model).sum()), 0.5


def homogeneous(m: int, tau: int, up: int, down: int, epochs: int = 1) -> list[ClientProfile]:
    return [ClientProfile(c, tau, up, down, epochs) for c in range(m)]


@pytest.fixture
def stub():
    return StubLearning


@pytest.fixture(scope="session")
def small_workload():
    train = synth_blobs(4, 5, 30, 0.3, seed=3)
    test = synth_blobs(4, 5, 20, 0.3, seed=4, centers_seed=3)
    plan = partition_iid(train, 3, seed=0)
    return Workload(LearnerSpec("softmax-regression", 5, 4), SgdConfig(0.1, 5, 1), train, test, plan, seed=7)
