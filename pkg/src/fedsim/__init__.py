"""Deterministic simulator of synchronous FedAvg, baseline asynchronous FL and CSMAAFL."""

from .baseline import BetaSchedule, effective_coefficients, run_baseline_afl, solve_betas
from .csmaafl import adapt_local_iterations, randomized_trunk_schedule, run_csmaafl, staleness_weight
from .models import LearnerSpec, SgdConfig, convex_blend, evaluate, local_sgd_step, train_local, weighted_sum
from .sfl import run_fedavg
from .timing import afl_trunk_time_bounds, sfl_round_time

__version__ = "0.1.0"
