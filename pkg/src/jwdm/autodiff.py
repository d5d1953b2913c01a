"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Graph` is an append-only tape.  Every tensor produced inside a graph
belongs to it; :meth:`Graph.backward` walks the tape once, in reverse
insertion order.  Graphs share no state, so separate graphs may live on
separate threads.

    >>> g = Graph()
    >>> x = g.constant([3.0])
    >>> loss = x * x
    >>> g.backward(loss)
    >>> x.grad
    array([6.])
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "DomainError",
    "Graph",
    "ShapeError",
    "Tensor",
    "forward_op",
    "OPS",
]

DEFAULT_LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    """Operand shapes do not conform to the requested op."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an op (e.g. log of x <= 0)."""


class Tensor:
    """A node in a :class:`Graph`: value, gradient slot and identity."""

    __slots__ = ("data", "grad", "graph", "node_id", "name")

    def __init__(self, data: np.ndarray, graph: "Graph", node_id: int, name: str | None = None):
        self.data = data
        self.grad: np.ndarray | None = None
        self.graph = graph
        self.node_id = node_id
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, id={self.node_id})"

    # operator sugar; python scalars become graph constants
    def __add__(self, other):
        return forward_op("add", [self, self.graph._lift(other)])

    def __radd__(self, other):
        return forward_op("add", [self.graph._lift(other), self])

    def __sub__(self, other):
        return forward_op("sub", [self, self.graph._lift(other)])

    def __rsub__(self, other):
        return forward_op("sub", [self.graph._lift(other), self])

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return forward_op("scale", [self], factor=float(other))
        return forward_op("mul", [self, self.graph._lift(other)])

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return forward_op("matmul", [self, other])

    def __neg__(self):
        return forward_op("neg", [self])


@dataclass
class _Record:
    kind: str
    inputs: tuple[int, ...]
    output: int
    saved: dict = field(default_factory=dict)


class Graph:
    """Append-only tape of op records plus the tensors they connect."""

    def __init__(self) -> None:
        self.tensors: list[Tensor] = []
        self.records: list[_Record] = []
        self._params: dict[str, Tensor] = {}

    def _new(self, data: np.ndarray, name: str | None = None) -> Tensor:
        t = Tensor(data, self, len(self.tensors), name)
        self.tensors.append(t)
        return t

    def constant(self, value, name: str | None = None) -> Tensor:
        """Leaf tensor holding a private float64 copy of ``value``."""
        arr = np.array(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        return self._new(arr, name)

    def param(self, name: str, array: np.ndarray) -> Tensor:
        """Leaf bound to a named parameter array; one leaf per name per graph.

        The array is referenced, not copied, so the value seen by the graph is
        the parameter's value at the time the forward pass runs.
        """
        t = self._params.get(name)
        if t is None:
            if array.dtype != np.float64:
                raise TypeError(f"parameter {name!r} must be float64, got {array.dtype}")
            t = self._new(array, name)
            self._params[name] = t
        return t

    def param_grads(self) -> dict[str, np.ndarray]:
        """Gradients of every parameter leaf after :meth:`backward`."""
        out = {}
        for name, t in self._params.items():
            out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return out

    def _lift(self, value) -> Tensor:
        if isinstance(value, Tensor):
            if value.graph is not self:
                raise ValueError("tensors belong to different graphs")
            return value
        return self.constant(value)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor with d(loss)/d(tensor).

        Tensors the loss does not depend on receive a zero gradient.
        """
        if loss.graph is not self:
            raise ValueError("loss does not belong to this graph")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        for t in self.tensors:
            t.grad = None
        loss.grad = np.ones_like(loss.data)
        for rec in reversed(self.records):
            out = self.tensors[rec.output]
            if out.grad is None:
                continue
            ins = [self.tensors[i] for i in rec.inputs]
            for t, g in zip(ins, _BACKWARD[rec.kind](out.grad, ins, out, rec.saved)):
                if g is None:
                    continue
                g = _unbroadcast(g, t.shape)
                t.grad = g.copy() if t.grad is None else t.grad + g
        for t in self.tensors:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


# -- forward rules: (inputs, attrs) -> (value, saved) -------------------------

def _f_matmul(ins, attrs):
    a, b = ins
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a.data @ b.data, {}


def _f_binary(fn):
    def rule(ins, attrs, _fn=fn):
        a, b = ins
        _broadcast_shape(attrs["_kind"], a, b)
        return _fn(a.data, b.data), {}
    return rule


def _f_unary(fn):
    return lambda ins, attrs: (fn(ins[0].data), {})


def _f_leaky(ins, attrs):
    x = ins[0].data
    slope = attrs.get("slope", DEFAULT_LEAKY_SLOPE)
    return np.where(x > 0, x, slope * x), {"slope": slope}


def _f_log(ins, attrs):
    x = ins[0].data
    if np.any(x <= 0):
        raise DomainError(f"log of non-positive value (min {x.min()!r})")
    return np.log(x), {}


def _f_clip(ins, attrs):
    return np.clip(ins[0].data, attrs["low"], attrs["high"]), {"low": attrs["low"], "high": attrs["high"]}


_FORWARD: dict[str, Callable] = {
    "matmul": _f_matmul,
    "add": _f_binary(np.add),
    "sub": _f_binary(np.subtract),
    "mul": _f_binary(np.multiply),
    "neg": _f_unary(np.negative),
    "scale": lambda ins, attrs: (ins[0].data * attrs["factor"], {"factor": attrs["factor"]}),
    "relu": _f_unary(lambda x: np.maximum(x, 0.0)),
    "leaky_relu": _f_leaky,
    "tanh": _f_unary(np.tanh),
    "sigmoid": _f_unary(expit),
    "log": _f_log,
    "mean": _f_unary(lambda x: np.array([x.mean()])),
    "sum": _f_unary(lambda x: np.array([x.sum()])),
    "abs": _f_unary(np.abs),
    "clip": _f_clip,
}


# -- backward rules: (grad_out, inputs, output, saved) -> input grads ---------

def _b_matmul(g, ins, out, saved):
    a, b = ins
    return g @ b.data.T, a.data.T @ g


def _b_leaky(g, ins, out, saved):
    return (g * np.where(ins[0].data > 0, 1.0, saved["slope"]),)


def _b_clip(g, ins, out, saved):
    x = ins[0].data
    return (g * ((x >= saved["low"]) & (x <= saved["high"])),)


_BACKWARD: dict[str, Callable] = {
    "matmul": _b_matmul,
    "add": lambda g, ins, out, s: (g, g),
    "sub": lambda g, ins, out, s: (g, -g),
    "mul": lambda g, ins, out, s: (g * ins[1].data, g * ins[0].data),
    "neg": lambda g, ins, out, s: (-g,),
    "scale": lambda g, ins, out, s: (g * s["factor"],),
    "relu": lambda g, ins, out, s: (g * (ins[0].data > 0),),
    "leaky_relu": _b_leaky,
    "tanh": lambda g, ins, out, s: (g * (1.0 - out.data ** 2),),
    "sigmoid": lambda g, ins, out, s: (g * out.data * (1.0 - out.data),),
    "log": lambda g, ins, out, s: (g / ins[0].data,),
    "mean": lambda g, ins, out, s: (np.full_like(ins[0].data, g.reshape(-1)[0] / ins[0].data.size),),
    "sum": lambda g, ins, out, s: (np.full_like(ins[0].data, g.reshape(-1)[0]),),
    # subgradient sign(0) = 0
    "abs": lambda g, ins, out, s: (g * np.sign(ins[0].data),),
    "clip": _b_clip,
}

OPS = tuple(_FORWARD)
_ARITY = {"matmul": 2, "add": 2, "sub": 2, "mul": 2}


def forward_op(kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Apply op ``kind`` to ``inputs`` and append its record to their graph."""
    if kind not in _FORWARD:
        raise ValueError(f"unknown op {kind!r}; expected one of {OPS}")
    arity = _ARITY.get(kind, 1)
    if len(inputs) != arity:
        raise ValueError(f"{kind} takes {arity} input(s), got {len(inputs)}")
    graph = inputs[0].graph
    if any(t.graph is not graph for t in inputs):
        raise ValueError("tensors belong to different graphs")
    value, saved = _FORWARD[kind](inputs, dict(attrs, _kind=kind))
    out = graph._new(np.asarray(value, dtype=np.float64))
    graph.records.append(_Record(kind, tuple(t.node_id for t in inputs), out.node_id, saved))
    return out


# functional spellings used by the model code

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return forward_op("matmul", [a, b])


def relu(x: Tensor) -> Tensor:
    return forward_op("relu", [x])


def leaky_relu(x: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    return forward_op("leaky_relu", [x], slope=slope)


def tanh(x: Tensor) -> Tensor:
    return forward_op("tanh", [x])


def sigmoid(x: Tensor) -> Tensor:
    return forward_op("sigmoid", [x])


def log(x: Tensor) -> Tensor:
    return forward_op("log", [x])


def mean(x: Tensor) -> Tensor:
    return forward_op("mean", [x])


def tsum(x: Tensor) -> Tensor:
    return forward_op("sum", [x])


def tabs(x: Tensor) -> Tensor:
    return forward_op("abs", [x])


def scale(x: Tensor, factor: float) -> Tensor:
    return forward_op("scale", [x], factor=float(factor))


def clip(x: Tensor, low: float, high: float) -> Tensor:
    return forward_op("clip", [x], low=low, high=high)
