"""Experiment configuration: a flat JSON object with dotted keys.

Parsing keeps the line of every key so errors can point at it, rejects
duplicate and unknown keys, validates ranges and returns a config with every
default filled in.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError

ALGORITHMS = ("sfl", "afl-baseline", "csmaafl")
DATASETS = ("idx-files", "synth-blobs")
DISTRIBUTIONS = ("iid", "label-shards")
SEED_ENV = "FEDSIM_SEED"


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    dataset: str
    data_train_images: str | None = None
    data_train_labels: str | None = None
    data_test_images: str | None = None
    data_test_labels: str | None = None
    data_class_count: int = 10
    synth_classes: int = 10
    synth_dim: int = 20
    synth_per_class: int = 600
    synth_test_per_class: int = 100
    synth_spread: float = 0.3
    distribution: str = "iid"
    partition_classes_per_client: int = 2
    clients: int = 100
    model_kind: str = "softmax-regression"
    model_hidden: tuple[int, ...] = ()
    sgd_learning_rate: float = 0.01
    sgd_batch_size: int = 5
    sgd_local_epochs: int = 1
    timing_tau_base: int = 10
    timing_heterogeneity: tuple[float, float] = (1.0, 1.0)
    timing_factors: tuple[float, ...] | None = None
    timing_upload: int = 2
    timing_download: int = 2
    csmaafl_gamma: float = 0.2
    csmaafl_rho: float = 0.9
    csmaafl_mu0: float | None = None
    csmaafl_scheduler: str = "slot"
    csmaafl_adaptive: bool = True
    csmaafl_e_max: int = 8
    baseline_schedule: tuple[int, ...] | None = None
    seed: int = 0
    budget_relative_slots: float = 60.0
    budget_max_rounds: int | None = None
    eval_every: float = 1.0
    output: str = "metrics.csv"
    trace: str | None = None

    def to_dict(self) -> dict[str, Any]:
        """Dotted-key form, as it would appear in a config file."""
        return {_dotted(k): (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


# attribute name -> dotted key; the first underscore of grouped keys is the group separator
_GROUPS = ("data", "synth", "partition", "model", "sgd", "timing", "csmaafl", "baseline", "budget", "eval")


def _dotted(attr: str) -> str:
    head, _, tail = attr.partition("_")
    return f"{head}.{tail}" if head in _GROUPS and tail else attr


KEYS = {_dotted(f.name): f.name for f in fields(ExperimentConfig)}
REQUIRED = ("algorithm", "dataset")


# ---------------------------------------------------------------- raw parse

def _line(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def parse_pairs(text: str, source: str = "<config>") -> list[tuple[str, Any, int]]:
    """Top-level ``(key, value, line)`` triples of a JSON object, duplicates included."""
    decoder = json.JSONDecoder()
    ws = " \t\r\n"

    def skip(i: int) -> int:
        while i < len(text) and text[i] in ws:
            i += 1
        return i

    def fail(msg: str, i: int):
        raise ConfigError(f"{source}: line {_line(text, i)}: {msg}")

    i = skip(0)
    if i >= len(text) or text[i] != "{":
        fail("expected a JSON object", i)
    i = skip(i + 1)
    out: list[tuple[str, Any, int]] = []
    if i < len(text) and text[i] == "}":
        i += 1
    else:
        while True:
            if i >= len(text) or text[i] != '"':
                fail("expected a quoted key", i)
            key_pos = i
            try:
                key, i = json.decoder.scanstring(text, i + 1)
            except json.JSONDecodeError as exc:
                fail(exc.msg, exc.pos)
            i = skip(i)
            if i >= len(text) or text[i] != ":":
                fail(f"expected ':' after key {key!r}", i)
            try:
                value, i = decoder.raw_decode(text, skip(i + 1))
            except json.JSONDecodeError as exc:
                fail(f"bad value for {key!r}: {exc.msg}", exc.pos)
            out.append((key, value, _line(text, key_pos)))
            i = skip(i)
            if i < len(text) and text[i] == ",":
                i = skip(i + 1)
                continue
            if i < len(text) and text[i] == "}":
                i += 1
                break
            fail("expected ',' or '}'", i)
    if skip(i) != len(text):
        fail("trailing content after the JSON object", skip(i))
    return out


# ---------------------------------------------------------------- validation

class _Check:
    def __init__(self, key: str, line: int | None) -> None:
        self.key, self.line = key, line

    def fail(self, msg: str):
        where = f" (line {self.line})" if self.line else ""
        raise ConfigError(f"{self.key}{where}: {msg}")

    def integer(self, v, lo: int | None = None) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            self.fail(f"must be >= {lo}, got {v}")
        return v

    def number(self, v, positive: bool = False) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}")
        if positive and not v > 0:
            self.fail(f"must be > 0, got {v}")
        return float(v)

    def choice(self, v, options) -> str:
        if v not in options:
            self.fail(f"expected one of {list(options)}, got {v!r}")
        return v

    def string(self, v) -> str:
        if not isinstance(v, str) or not v:
            self.fail(f"expected a non-empty string, got {v!r}")
        return v

    def array(self, v) -> list:
        if not isinstance(v, list):
            self.fail(f"expected a JSON array, got {v!r}")
        return v


def _coerce(key: str, v: Any, c: _Check) -> Any:
    if v is None and key in {"data.train_images", "data.train_labels", "data.test_images", "data.test_labels",
                             "timing.factors", "csmaafl.mu0", "baseline.schedule", "budget.max_rounds", "trace"}:
        return None
    match key:
        case "algorithm":
            return c.choice(v, ALGORITHMS)
        case "dataset":
            return c.choice(v, DATASETS)
        case "distribution":
            return c.choice(v, DISTRIBUTIONS)
        case "model.kind":
            return c.choice(v, ("softmax-regression", "mlp"))
        case "csmaafl.scheduler":
            return c.choice(v, ("slot", "randomized-trunk"))
        case "data.train_images" | "data.train_labels" | "data.test_images" | "data.test_labels" | "output" | "trace":
            return c.string(v)
        case "synth.classes" | "data.class_count":
            return c.integer(v, 2)
        case "synth.test_per_class":
            return c.integer(v, 1)
        case ("synth.dim" | "synth.per_class" | "partition.classes_per_client" | "clients" | "sgd.batch_size"
              | "sgd.local_epochs" | "timing.tau_base" | "timing.upload" | "timing.download" | "csmaafl.e_max"
              | "budget.max_rounds"):
            return c.integer(v, 1)
        case "seed":
            return c.integer(v, 0)
        case "synth.spread":
            s = c.number(v)
            if s < 0:
                c.fail(f"must be >= 0, got {v}")
            return s
        case "sgd.learning_rate" | "csmaafl.gamma" | "csmaafl.mu0" | "budget.relative_slots" | "eval.every":
            return c.number(v, positive=True)
        case "csmaafl.rho":
            r = c.number(v)
            if not 0 < r < 1:
                c.fail(f"must lie in (0, 1), got {v}")
            return r
        case "csmaafl.adaptive":
            if not isinstance(v, bool):
                c.fail(f"expected true or false, got {v!r}")
            return v
        case "model.hidden":
            return tuple(_Check(key, c.line).integer(h, 1) for h in c.array(v))
        case "timing.heterogeneity":
            pair = c.array(v)
            if len(pair) != 2:
                c.fail(f"expected [min, max], got {v!r}")
            lo, hi = (c.number(x) for x in pair)
            if not 1 <= lo <= hi:
                c.fail(f"need 1 <= min <= max, got {v!r}")
            return (lo, hi)
        case "timing.factors":
            factors = tuple(c.number(x) for x in c.array(v))
            if any(f < 1 for f in factors):
                c.fail("slowdown factors must be >= 1")
            return factors
        case "baseline.schedule":
            return tuple(c.integer(x, 0) for x in c.array(v))
    raise AssertionError(key)


def build_config(pairs: list[tuple[str, Any, int | None]], base_dir: Path | None = None,
                 source: str = "<config>") -> ExperimentConfig:
    seen: dict[str, int | None] = {}
    values: dict[str, Any] = {}
    for key, value, line in pairs:
        if key in seen:
            raise ConfigError(f"{source}: duplicate key {key!r} on lines {seen[key]} and {line}")
        seen[key] = line
        if key not in KEYS:
            raise ConfigError(f"{source}: unknown key {key!r} (line {line})")
        values[KEYS[key]] = _coerce(key, value, _Check(key, line))
    for key in REQUIRED:
        if key not in seen:
            raise ConfigError(f"{source}: missing required key {key!r}")

    def check(key: str) -> _Check:
        return _Check(key, seen.get(key))

    cfg = ExperimentConfig(**values)
    m = cfg.clients
    if cfg.dataset == "idx-files":
        resolved = {}
        for key in ("data.train_images", "data.train_labels", "data.test_images", "data.test_labels"):
            path = getattr(cfg, KEYS[key])
            if path is None:
                raise ConfigError(f"{source}: missing required key {key!r} for dataset idx-files")
            full = Path(path) if base_dir is None else (base_dir / path)
            if not full.exists():
                check(key).fail(f"file not found: {full}")
            resolved[KEYS[key]] = str(full)
        cfg = replace(cfg, **resolved)
    else:
        if cfg.synth_classes * cfg.synth_per_class < m:
            check("clients").fail(f"{m} clients but only {cfg.synth_classes * cfg.synth_per_class} examples")
    if cfg.model_kind == "mlp" and not cfg.model_hidden:
        check("model.hidden").fail("mlp needs at least one hidden layer")
    if cfg.model_kind == "softmax-regression" and cfg.model_hidden:
        check("model.hidden").fail("softmax-regression takes no hidden layers")
    if cfg.timing_factors is not None and len(cfg.timing_factors) != m:
        check("timing.factors").fail(f"expected {m} factors, got {len(cfg.timing_factors)}")
    if cfg.baseline_schedule is not None and sorted(cfg.baseline_schedule) != list(range(m)):
        check("baseline.schedule").fail(f"must be a permutation of 0..{m - 1}")
    if cfg.csmaafl_mu0 is None:
        cfg = replace(cfg, csmaafl_mu0=float(m))
    return cfg


def parse_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    """Load and validate a config file.

    The seed is overridden by ``seed`` if given, else by ``$FEDSIM_SEED``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = build_config(parse_pairs(text, str(path)), path.parent, str(path))
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={os.environ[SEED_ENV]!r} is not an integer") from exc
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"seed must be >= 0, got {seed}")
        cfg = replace(cfg, seed=seed)
    return cfg


def config_from_dict(values: dict[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from dotted keys in code (no line numbers)."""
    return build_config([(k, v, None) for k, v in values.items()], base_dir, "<dict>")
