"""Flat parameter vectors, local learners and the two aggregation primitives.

A model is a 1-D float64 numpy array. :class:`LearnerSpec` describes how that
vector is sliced into dense layers; everything else here is a pure function
over those vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import AggregationError, ConfigError, NumericError

SOFTMAX_REGRESSION = "softmax-regression"
MLP = "mlp"
LEARNER_KINDS = (SOFTMAX_REGRESSION, MLP)

COEFFICIENT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class LearnerSpec:
    """Dense network with ReLU hidden layers and a log-softmax output."""

    kind: str
    input_dim: int
    class_count: int
    hidden_dims: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in LEARNER_KINDS:
            raise ConfigError(f"unknown learner kind {self.kind!r}; expected one of {LEARNER_KINDS}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.kind == SOFTMAX_REGRESSION and self.hidden_dims:
            raise ConfigError("softmax-regression takes no hidden layers")
        if self.kind == MLP and not self.hidden_dims:
            raise ConfigError("mlp needs at least one hidden layer")
        if self.input_dim < 1 or self.class_count < 2 or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"invalid layer sizes in {self}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.class_count)

    @cached_property
    def _slices(self) -> tuple[tuple[slice, tuple[int, int], slice], ...]:
        out = []
        offset = 0
        sizes = self.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset = w.stop
            b = slice(offset, offset + fan_out)
            offset = b.stop
            out.append((w, (fan_in, fan_out), b))
        return tuple(out)

    @property
    def parameter_count(self) -> int:
        return self._slices[-1][2].stop

    def layers(self, vector: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weight, bias) views into ``vector``; writes go through to it."""
        return [(vector[w].reshape(shape), vector[b]) for w, shape, b in self._slices]


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    batch_size: int = 5
    local_epochs: int = 1

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.local_epochs < 1:
            raise ConfigError(f"local epochs must be >= 1, got {self.local_epochs}")


def init_model(spec: LearnerSpec, seed: int) -> np.ndarray:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    vector = np.zeros(spec.parameter_count)
    for weight, _ in spec.layers(vector):
        bound = math.sqrt(6.0 / weight.shape[0])
        weight[...] = rng.uniform(-bound, bound, size=weight.shape)
    return vector


def _check_dim(model: np.ndarray, spec: LearnerSpec) -> None:
    if model.ndim != 1 or model.shape[0] != spec.parameter_count:
        raise ConfigError(
            f"model has shape {model.shape}, learner {spec.kind} expects ({spec.parameter_count},)"
        )


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _forward(layers, x: np.ndarray):
    activations = [x]
    h = x
    for weight, bias in layers[:-1]:
        h = np.maximum(h @ weight + bias, 0.0)
        activations.append(h)
    weight, bias = layers[-1]
    return activations, _log_softmax(h @ weight + bias)


def _backprop(layers, grad_layers, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Write the mean cross-entropy gradient into ``grad_layers``; returns log-probabilities."""
    n = x.shape[0]
    activations, logp = _forward(layers, x)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for k in range(len(layers) - 1, -1, -1):
        gw, gb = grad_layers[k]
        np.matmul(activations[k].T, delta, out=gw)
        delta.sum(axis=0, out=gb)
        if k:
            delta = (delta @ layers[k][0].T) * (activations[k] > 0)
    return logp


def loss_and_gradient(
    model: np.ndarray, x: np.ndarray, y: np.ndarray, spec: LearnerSpec
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient as a flat vector."""
    _check_dim(model, spec)
    grad = np.empty_like(model)
    logp = _backprop(spec.layers(model), spec.layers(grad), x, y)
    return -float(logp[np.arange(x.shape[0]), y].mean()), grad


def _require_finite(grad: np.ndarray) -> None:
    if not np.isfinite(grad).all():
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericError(f"non-finite gradient at parameter index {bad} (value {grad[bad]})")


def local_sgd_step(
    model: np.ndarray, x: np.ndarray, y: np.ndarray, learning_rate: float, spec: LearnerSpec
) -> np.ndarray:
    """One gradient step on the batch mean loss. ``model`` is left untouched."""
    if x.shape[0] == 0:
        raise ConfigError("empty batch")
    _, grad = loss_and_gradient(model, x, y, spec)
    _require_finite(grad)
    return model - learning_rate * grad


def epoch_seed(seed: Sequence[int] | int, epoch: int) -> np.random.SeedSequence:
    """Shuffle seed for one epoch, derived from (seed..., epoch)."""
    base = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    return np.random.SeedSequence([*(int(s) for s in base), int(epoch)])


def train_local(
    model: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    cfg: SgdConfig,
    spec: LearnerSpec,
    seed: Sequence[int] | int,
    first_epoch: int = 0,
    epochs: int | None = None,
) -> np.ndarray:
    """Run mini-batch SGD epochs over a client partition.

    Epoch ``e`` shuffles with :func:`epoch_seed` ``(seed, e)``, for ``e`` in
    ``first_epoch .. first_epoch + epochs - 1``. ``epochs`` defaults to
    ``cfg.local_epochs``. Every step is bit-identical to :func:`local_sgd_step`.
    """
    n = x.shape[0]
    if n == 0:
        raise ConfigError("cannot train on an empty partition")
    _check_dim(model, spec)
    epochs = cfg.local_epochs if epochs is None else epochs
    w = model.copy()
    grad = np.empty_like(w)
    layers, grad_layers = spec.layers(w), spec.layers(grad)
    bs = cfg.batch_size
    lr = cfg.learning_rate
    for e in range(first_epoch, first_epoch + epochs):
        order = np.random.default_rng(epoch_seed(seed, e)).permutation(n)
        xs, ys = x[order], y[order]
        for start in range(0, n, bs):
            _backprop(layers, grad_layers, xs[start:start + bs], ys[start:start + bs])
            _require_finite(grad)
            w -= lr * grad
    return w


def weighted_sum(models: Sequence[np.ndarray], coefficients: Sequence[float]) -> np.ndarray:
    """Convex combination ``sum(c_m * w_m)`` of equally shaped models."""
    if len(models) != len(coefficients) or not models:
        raise AggregationError(f"{len(models)} models but {len(coefficients)} coefficients")
    coefs = [float(c) for c in coefficients]
    if any(c < 0 for c in coefs):
        raise AggregationError(f"negative aggregation coefficient in {coefs}")
    total = math.fsum(coefs)
    if abs(total - 1.0) > COEFFICIENT_SUM_TOL:
        raise AggregationError(f"aggregation coefficients sum to {total!r}, expected 1")
    shape = models[0].shape
    if any(m.shape != shape for m in models):
        raise AggregationError(f"models of differing shapes {[m.shape for m in models]}")
    # correctly rounded per coordinate, so the result ignores client order
    products = np.stack([c * m for c, m in zip(coefs, models)]).reshape(len(coefs), -1)
    out = np.array([math.fsum(col) for col in products.T])
    return out


def convex_blend(global_model: np.ndarray, local_model: np.ndarray, beta: float) -> np.ndarray:
    """``beta * global + (1 - beta) * local``."""
    if not 0.0 <= beta <= 1.0:
        raise AggregationError(f"blend coefficient {beta!r} outside [0, 1]")
    if global_model.shape != local_model.shape:
        raise AggregationError(f"model shape {local_model.shape} differs from {global_model.shape}")
    return beta * global_model + (1.0 - beta) * local_model


def evaluate(
    model: np.ndarray, x: np.ndarray, y: np.ndarray, spec: LearnerSpec, chunk: int = 4096
) -> tuple[float, float]:
    """Mean cross-entropy and top-1 accuracy over a dataset."""
    _check_dim(model, spec)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    loss = 0.0
    correct = 0
    for start in range(0, n, chunk):
        xb, yb = x[start:start + chunk], y[start:start + chunk]
        _, logp = _forward(spec.layers(model), xb)
        loss -= float(logp[np.arange(len(yb)), yb].sum())
        correct += int((logp.argmax(axis=1) == yb).sum())
    return loss / n, correct / n

