"""Turn an ExperimentConfig into a workload, timing profiles and an engine run."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from .baseline import run_baseline_afl
from .config import ExperimentConfig
from .csmaafl import run_csmaafl, with_adapted_epochs
from .data import Dataset, load_idx, partition_iid, partition_label_shards, synth_blobs
from .errors import FedSimError
from .metrics import write_csv
from .models import LearnerSpec, SgdConfig
from .sfl import run_fedavg
from .simulation import Budget, RunResult, Workload
from .timing import ClientProfile, write_trace

log = logging.getLogger(__name__)


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "idx-files":
        train = load_idx(cfg.data_train_images, cfg.data_train_labels, cfg.data_class_count)
        test = load_idx(cfg.data_test_images, cfg.data_test_labels, cfg.data_class_count)
        return train, test
    train = synth_blobs(cfg.synth_classes, cfg.synth_dim, cfg.synth_per_class, cfg.synth_spread, cfg.seed)
    test = synth_blobs(cfg.synth_classes, cfg.synth_dim, cfg.synth_test_per_class, cfg.synth_spread,
                       cfg.seed + 1_000_003, centers_seed=cfg.seed)
    return train, test


def build_workload(cfg: ExperimentConfig, datasets: tuple[Dataset, Dataset] | None = None) -> Workload:
    train, test = datasets or load_datasets(cfg)
    if cfg.distribution == "iid":
        plan = partition_iid(train, cfg.clients, cfg.seed)
    else:
        plan = partition_label_shards(train, cfg.clients, cfg.partition_classes_per_client, cfg.seed)
    spec = LearnerSpec(cfg.model_kind, train.dim, train.class_count, cfg.model_hidden)
    sgd = SgdConfig(cfg.sgd_learning_rate, cfg.sgd_batch_size, cfg.sgd_local_epochs)
    return Workload(spec, sgd, train, test, plan, cfg.seed)


def slowdown_factors(cfg: ExperimentConfig) -> list[float]:
    if cfg.timing_factors is not None:
        return list(cfg.timing_factors)
    lo, hi = cfg.timing_heterogeneity
    rng = np.random.default_rng([cfg.seed, 0x6865])
    return [float(a) for a in rng.uniform(lo, hi, cfg.clients)]


def build_profiles(cfg: ExperimentConfig) -> list[ClientProfile]:
    """Per-client ticks: one epoch takes ``round(a_m * tau_base)``, at least one tick."""
    return [
        ClientProfile(m, max(1, math.floor(a * cfg.timing_tau_base + 0.5)), cfg.timing_upload,
                      cfg.timing_download, cfg.sgd_local_epochs)
        for m, a in enumerate(slowdown_factors(cfg))
    ]


def execute(cfg: ExperimentConfig, workload: Workload | None = None) -> RunResult:
    """Run the configured engine and return its full result."""
    workload = workload or build_workload(cfg)
    profiles = build_profiles(cfg)
    budget = Budget(cfg.budget_relative_slots, cfg.budget_max_rounds)
    e = cfg.sgd_local_epochs
    if cfg.algorithm == "sfl":
        return run_fedavg(workload, profiles, budget, e)
    if cfg.algorithm == "afl-baseline":
        return run_baseline_afl(workload, profiles, cfg.baseline_schedule, budget, e, cfg.eval_every)
    if cfg.csmaafl_adaptive:
        profiles = with_adapted_epochs(profiles, e, cfg.csmaafl_e_max)
    return run_csmaafl(workload, profiles, cfg.csmaafl_gamma, cfg.csmaafl_rho, cfg.csmaafl_mu0,
                       cfg.csmaafl_scheduler, cfg.seed, budget, e, cfg.eval_every)


def summary_line(cfg: ExperimentConfig, result: RunResult) -> str:
    last = result.records[-1]
    aggregations = len(result.aggregations) if cfg.algorithm != "sfl" else last.iteration
    return (f"{cfg.algorithm}: final_accuracy={last.accuracy:.4f} aggregations={aggregations} "
            f"sim_time={last.sim_time} relative_time={last.relative_time:.3f}")


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, trace: str | Path | None = None,
                   echo=print) -> Path:
    """Run one experiment, write its metrics CSV and print a one-line summary."""
    try:
        result = execute(cfg)
    except FedSimError as exc:
        raise type(exc)(f"{cfg.algorithm} run (seed {cfg.seed}): {exc}") from exc
    path = write_csv(result.records, out or cfg.output)
    trace = trace or cfg.trace
    if trace:
        with open(trace, "w") as fh:
            write_trace(result.events, fh)
    log.info("wrote %d rows to %s", len(result.records), path)
    if echo is not None:
        echo(summary_line(cfg, result))
    return path

