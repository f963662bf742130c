from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import StubLearning, homogeneous
from fedsim.baseline import effective_coefficients, fastest_first, run_baseline_afl, solve_betas
from fedsim.data import PartitionPlan
from fedsim.errors import ConfigError
from fedsim.models import convex_blend, weighted_sum
from fedsim.sfl import run_fedavg
from fedsim.simulation import Budget, Workload
from fedsim.timing import ClientProfile

F = Fraction


def test_betas_identity_schedule():
    plan = solve_betas([F(2, 10), F(3, 10), F(5, 10)], [0, 1, 2])
    assert plan.betas == (0, F(2, 5), F(1, 2))


def test_betas_permuted_schedule():
    plan = solve_betas([F(2, 10), F(3, 10), F(5, 10)], [2, 0, 1])
    assert plan.betas == (0, F(5, 7), F(7, 10))
    floats = solve_betas([0.2, 0.3, 0.5], [2, 0, 1])
    assert floats.betas[0] == 0.0
    assert floats.betas[1:] == pytest.approx((5 / 7, 0.7), rel=1e-15)


@pytest.mark.parametrize("m", range(2, 7))
def test_equal_weights_closed_form(m):
    rng = np.random.default_rng(m)
    plan = solve_betas([F(1, m)] * m, list(rng.permutation(m)))
    assert plan.betas == tuple(F(k - 1, k) for k in range(1, m + 1))


def test_single_client():
    plan = solve_betas([F(1)], [0])
    assert plan.betas == (0,)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_reconstruction_and_first_beta(m, seed):
    rng = np.random.default_rng(seed)
    alphas = list(rng.dirichlet(np.ones(m)) + 1e-3)
    total = sum(alphas)
    alphas = [a / total for a in alphas]
    schedule = list(rng.permutation(m))
    if abs(sum(alphas) - 1) > 1e-12:
        return
    plan = solve_betas(alphas, schedule)
    assert plan.betas[0] == 0
    assert all(0 <= b < 1 for b in plan.betas)
    np.testing.assert_allclose(plan.reconstruct(), alphas, rtol=0, atol=1e-12)


@pytest.mark.parametrize("alphas,schedule", [
    ([0.5, 0.4], [0, 1]),
    ([0.5, 0.5], [0, 0]),
    ([0.5, 0.5], [0, 1, 2]),
    ([1.0, 0.0], [0, 1]),
    ([], []),
])
def test_invalid_solver_inputs(alphas, schedule):
    with pytest.raises(ConfigError):
        solve_betas(alphas, schedule)


def test_effective_coefficients_hand_example():
    weights, residual = effective_coefficients([0.5, 0.5], [0, 1])
    assert weights == [0.25, 0.5]
    assert residual == 0.25
    assert effective_coefficients([0.3], [0]) == ([0.3], 0.7)


def test_effective_weights_diminish_for_early_uploads():
    weights, residual = effective_coefficients([0.25] * 4, [0, 1, 2, 3])
    assert weights == sorted(weights)
    assert sum(weights) + residual == pytest.approx(1.0, abs=1e-15)


def test_fastest_first_order():
    profiles = [ClientProfile(0, 9, 1, 1), ClientProfile(1, 3, 1, 1), ClientProfile(2, 3, 1, 1, 2)]
    assert fastest_first(profiles) == [1, 2, 0]  # pass times 9, 3, 6


def test_incremental_blending_matches_weighted_sum():
    rng = np.random.default_rng(0)
    alphas = [0.1, 0.6, 0.3]
    models = [rng.standard_normal(5) for _ in range(3)]
    plan = solve_betas(alphas, [1, 2, 0])
    w = rng.standard_normal(5)
    for k, c in enumerate(plan.schedule):
        w = convex_blend(w, models[c], plan.betas[k])
    np.testing.assert_allclose(w, weighted_sum(models, alphas), rtol=1e-13)


def uneven_workload(w):
    n = len(w.train)
    cuts = np.split(np.arange(n), [20, 70])
    return Workload(w.spec, w.sgd, w.train, w.test, PartitionPlan(tuple(cuts)), w.seed)


@pytest.mark.parametrize("schedule", [None, [2, 0, 1]])
def test_one_trunk_equals_fedavg(small_workload, schedule):
    w = uneven_workload(small_workload)
    profiles = [ClientProfile(c, t, 2, 1) for c, t in enumerate([5, 9, 3])]
    sync = run_fedavg(w, profiles, Budget(10, max_rounds=1))
    afl = run_baseline_afl(w, profiles, schedule, Budget(10, max_rounds=1))
    assert len(afl.aggregations) == 3
    scale = np.abs(sync.model) + 1e-300
    assert np.max(np.abs(afl.model - sync.model) / scale) <= 1e-9


def test_single_client_baseline_equals_fedavg(small_workload):
    w = small_workload
    one = Workload(w.spec, w.sgd, w.train, w.test, PartitionPlan((np.arange(len(w.train)),)), w.seed)
    profiles = homogeneous(1, 4, 1, 1)
    a = run_baseline_afl(one, profiles, budget=Budget(10, max_rounds=2))
    b = run_fedavg(one, profiles, Budget(10, max_rounds=2))
    assert np.array_equal(a.model, b.model)


def test_frozen_learners_keep_initial_model():
    stub = StubLearning(4, coefficients=[0.1, 0.2, 0.3, 0.4])
    result = run_baseline_afl(stub, homogeneous(4, 3, 1, 1), budget=Budget(10, max_rounds=2))
    assert len(result.aggregations) == 8
    np.testing.assert_allclose(result.model, stub.w0, rtol=1e-15)


def test_homogeneous_trunk_time_and_schedule():
    m, tau, up, down = 4, 6, 2, 1
    result = run_baseline_afl(StubLearning(m), homogeneous(m, tau, up, down), [3, 1, 0, 2], Budget(20, max_rounds=3))
    trunk = m * up + m * down + tau
    logs = result.aggregations
    assert [g.client_id for g in logs[:4]] == [3, 1, 0, 2]
    assert [logs[k * m - 1].time for k in (1, 2, 3)] == [trunk, 2 * trunk, 3 * trunk]
    for a, b in zip(result.grants, result.grants[1:]):
        assert a.end <= b.start


def test_heterogeneous_trunk_within_bounds():
    profiles = [ClientProfile(c, t, 2, 2) for c, t in enumerate([3, 12, 7, 5])]
    result = run_baseline_afl(StubLearning(4), profiles, budget=Budget(20, max_rounds=1))
    end = result.aggregations[-1].time
    assert 4 * 2 + 4 * 2 + 3 <= end <= 4 * 2 + 4 * 2 + 12
