"""MLP layers, Glorot-uniform initialisation and Adam with a two-phase lr schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = ("identity", "relu", "leaky_relu", "tanh", "sigmoid")


def _np_activation(kind: str, x: np.ndarray, slope: float) -> np.ndarray:
    # must stay numerically identical to the graph ops in autodiff
    if kind == "identity":
        return x
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x > 0, x, slope * x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return expit(x)
    raise ValueError(f"unknown activation {kind!r}")


def _graph_activation(kind: str, x: Tensor, slope: float) -> Tensor:
    if kind == "identity":
        return x
    if kind == "leaky_relu":
        return ad.leaky_relu(x, slope)
    return ad.forward_op(kind, [x])


@dataclass
class Layer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = "identity"


@dataclass
class Mlp:
    name: str
    layers: list[Layer]
    leaky_slope: float = ad.DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError(
                    f"{self.name}: layer {k} outputs {a.weight.shape[1]} but layer {k + 1} expects {b.weight.shape[0]}"
                )
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"{self.name}.{k}.weight"] = layer.weight
            out[f"{self.name}.{k}.bias"] = layer.bias
        return out

    def __call__(self, x):
        """Forward pass.  A :class:`Tensor` input records onto its graph;
        a plain array input runs detached in numpy."""
        if isinstance(x, Tensor):
            return self._forward_graph(x)
        return self.predict(x)

    def _forward_graph(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.input_dim:
            raise ad.ShapeError(f"{self.name}: expected (batch, {self.input_dim}) input, got {x.shape}")
        g = x.graph
        h = x
        for k, layer in enumerate(self.layers):
            w = g.param(f"{self.name}.{k}.weight", layer.weight)
            b = g.param(f"{self.name}.{k}.bias", layer.bias)
            h = _graph_activation(layer.activation, h @ w + b, self.leaky_slope)
        return h

    def predict(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ad.ShapeError(f"{self.name}: expected (batch, {self.input_dim}) input, got {h.shape}")
        for layer in self.layers:
            h = _np_activation(layer.activation, h @ layer.weight + layer.bias, self.leaky_slope)
        return h


def init_mlp(
    dims: Sequence[int],
    activations: Sequence[str],
    seed,
    name: str = "mlp",
    leaky_slope: float = ad.DEFAULT_LEAKY_SLOPE,
) -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`.
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError(f"dims needs at least input and output sizes, got {dims}")
    if len(activations) != len(dims) - 1:
        raise ValueError(f"{len(dims) - 1} layers need {len(dims) - 1} activations, got {len(activations)}")
    if any(d < 1 for d in dims):
        raise ValueError(f"dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-a, a, size=(fan_in, fan_out)), np.zeros(fan_out), act))
    return Mlp(name, layers, leaky_slope)


@dataclass(frozen=True)
class LrSchedule:
    """Constant ``base_lr`` before ``decay_start``, then linear decay to zero at ``total_epochs``."""

    base_lr: float = 2e-4
    decay_start: int = 100
    total_epochs: int = 200

    def __post_init__(self):
        if not 0 <= self.decay_start <= self.total_epochs:
            raise ValueError(f"need 0 <= decay_start <= total_epochs, got {self.decay_start}, {self.total_epochs}")


def lr_at(epoch: int, schedule: LrSchedule) -> float:
    if not 0 <= epoch <= schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    if epoch < schedule.decay_start:
        return schedule.base_lr
    span = schedule.total_epochs - schedule.decay_start
    if span == 0:
        return 0.0
    return schedule.base_lr * (schedule.total_epochs - epoch) / span


@dataclass
class AdamState:
    schedule: LrSchedule = field(default_factory=LrSchedule)
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    epoch: int = 0,
) -> float:
    """Bias-corrected Adam update applied in place; returns the lr used."""
    for name in params:
        if name not in grads:
            raise KeyError(f"no gradient for parameter {name!r}")
    lr = lr_at(epoch, state.schedule)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ad.ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return lr
