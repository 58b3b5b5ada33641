"""Small classifiers over flat parameter vectors and the local training step."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, TriggerSpec, apply_trigger
from .errors import ConfigError

ARCH_KINDS = ("softmax_regression", "mlp")


@dataclass(frozen=True)
class ModelArch:
    """Fully connected classifier: softmax regression, or an MLP with tanh hidden layers.

    Parameters are packed layer by layer as the row-major (fan_in, fan_out)
    weight matrix followed by the bias vector.
    """

    kind: str
    feature_dim: int
    num_classes: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise ConfigError(f"unknown architecture {self.kind!r}", "arch.kind")
        if self.kind == "softmax_regression" and self.hidden:
            raise ConfigError("softmax_regression takes no hidden layers", "arch.hidden")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.feature_dim, *self.hidden, self.num_classes)

    @property
    def num_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views of ``params`` as [(W, b), ...]."""
        layers, off = [], 0
        s = self.layer_sizes
        for fan_in, fan_out in zip(s[:-1], s[1:]):
            W = params[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            b = params[off : off + fan_out]
            off += fan_out
            layers.append((W, b))
        return layers


@dataclass(frozen=True, eq=False)
class Model:
    arch: ModelArch
    params: np.ndarray

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64)
        if p.shape != (self.arch.num_params,):
            raise ConfigError(f"expected {self.arch.num_params} parameters, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def with_params(self, params: np.ndarray) -> Model:
        return Model(self.arch, params)


@dataclass(frozen=True)
class LocalTrainParams:
    batch_size: int = 32
    lr: float = 0.1
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1", "local.batch_size")
        if not self.lr >= 0:
            raise ConfigError("local learning rate must be >= 0", "local.lr")
        if self.epochs < 1:
            raise ConfigError("local epochs must be >= 1", "local.epochs")


def init_model(arch: ModelArch, seed: int) -> Model:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    params = np.zeros(arch.num_params)
    for W, _ in arch.unpack(params):
        bound = 1.0 / math.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return Model(arch, params)


def logits(arch: ModelArch, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    layers = arch.unpack(params)
    h = X
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
    W, b = layers[-1]
    return h @ W + b


def _loss_grad(arch: ModelArch, params: np.ndarray, X: np.ndarray, y: np.ndarray):
    layers = arch.unpack(params)
    acts = [X]
    h = X
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = layers[-1]
    z = h @ W + b
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sums = ez.sum(axis=1)
    n = y.shape[0]
    rows = np.arange(n)
    loss = float(np.mean(np.log(sums) - z[rows, y]))

    delta = ez / sums[:, None]
    delta[rows, y] -= 1.0
    delta /= n
    grads = []
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        a = acts[li]
        grads.append((a.T @ delta, delta.sum(axis=0)))
        if li:
            delta = (delta @ W.T) * (1.0 - a * a)
    grad = np.concatenate([np.concatenate((gW.ravel(), gb)) for gW, gb in reversed(grads)])
    return loss, grad


def loss_and_grad(m: Model, batch: Dataset) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over ``batch`` and its gradient w.r.t. ``m.params``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    return _loss_grad(m.arch, m.params, batch.X, batch.y)


def model_update(global_model: Model, shard: Dataset, p: LocalTrainParams) -> np.ndarray:
    """Run ``p.epochs`` epochs of mini-batch SGD from ``global_model`` on ``shard``.

    Returns the accumulated parameter change. Each epoch draws a fresh
    permutation from ``p.seed``; indices inside a batch are kept in dataset
    order, so a single full batch reproduces ``loss_and_grad`` exactly.
    """
    if len(shard) == 0:
        raise ValueError("empty shard")
    arch, start = global_model.arch, global_model.params
    X, y = shard.X, shard.y
    n = len(shard)
    rng = np.random.default_rng(p.seed)
    delta = np.zeros_like(start)
    for _ in range(p.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, p.batch_size):
            idx = np.sort(order[lo : lo + p.batch_size])
            _, g = _loss_grad(arch, start + delta, X[idx], y[idx])
            delta -= p.lr * g
    return delta


def predict(m: Model, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the lowest index on ties
    return np.argmax(logits(m.arch, m.params, X), axis=1)


def evaluate_accuracy(m: Model, test: Dataset) -> float:
    if len(test) == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(m, test.X) == test.y))


def backdoor_success_rate(m: Model, clean_test: Dataset, trig: TriggerSpec) -> float:
    """Fraction of triggered test inputs (true label != target) classified as the target."""
    if len(clean_test) == 0:
        raise ValueError("empty test set")
    keep = clean_test.y != trig.target_label
    if not keep.any():
        return 0.0
    X = apply_trigger(clean_test.X[keep], trig)
    return float(np.mean(predict(m, X) == trig.target_label))
