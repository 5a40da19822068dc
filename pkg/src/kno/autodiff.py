"""Small reverse-mode autodiff over numpy float64 arrays.

Operations executed while a :class:`Tape` is active are recorded in order;
``Tape.gradient`` walks the record backwards once. The primitive set is fixed
and closed (the KNO graph is static), and modules with special structure
(kernel Gram matrices, the interpolant solve) register their own primitives
through :func:`record`.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit, ndtr

from .errors import ContractError, NumericError

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Float64 array with an optional place on the active tape."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)


@dataclass
class Node:
    id: int
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive applications.

    Node ids are assigned in creation order, so the record is already in a
    valid topological order.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._producer: dict[int, int] = {}

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        stack.remove(self)

    def _append(self, op, inputs, output, backward) -> None:
        node = Node(len(self.nodes), op, inputs, output, backward)
        self._producer[id(output)] = node.id
        self.nodes.append(node)

    def vjp(self, output: Tensor, cotangent, params: Iterable[Tensor]) -> list[np.ndarray]:
        """Vector-Jacobian product of ``output`` against ``params``."""
        params = list(params)
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != output.shape:
            raise ContractError(
                f"cotangent shape {cotangent.shape} does not match output {output.shape}")
        grads: dict[int, np.ndarray] = {id(output): cotangent}
        start = self._producer.get(id(output), -1)
        for node in reversed(self.nodes[: start + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                if not np.all(np.isfinite(gi)):
                    raise NumericError(
                        f"non-finite gradient produced by node {node.id} ({node.op})",
                        node_id=node.id)
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]

    def gradient(self, loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
        if loss.data.size != 1:
            raise ContractError(f"gradient needs a scalar loss, got shape {loss.shape}")
        return self.vjp(loss, np.ones_like(loss.data), params)


def grad(loss: Tensor, params: Iterable[Tensor], tape: Tape | None = None) -> list[np.ndarray]:
    """d(loss)/d(param) for each param; params off the loss's path get zeros."""
    tape = tape or active_tape()
    if tape is None:
        raise ContractError("no tape recorded the loss")
    return tape.gradient(loss, params)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(op: str, out_data: np.ndarray, inputs: Sequence, backward) -> Tensor:
    """Wrap ``out_data`` and, if any input needs a gradient, log it on the tape."""
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._append(op, tuple(inputs), out, backward)
    return out


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record("mul", a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * a.data / b.data**2, b.shape) if b.requires_grad else None
        return ga, gb

    return record("div", a.data / b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data**exponent
    return record("power", out, (a,),
                  lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def cos(a) -> Tensor:
    a = as_tensor(a)
    return record("cos", np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    return record("softplus", np.logaddexp(0.0, a.data), (a,),
                  lambda g: (g * expit(a.data),))


def gelu(a) -> Tensor:
    """Exact GeLU, x * Phi(x), with Phi the standard normal CDF."""
    a = as_tensor(a)
    x = a.data
    cdf = ndtr(x)

    def backward(g):
        # g * (Phi(x) + x phi(x)), built in one buffer
        t = np.multiply(x, x)
        t *= -0.5
        np.exp(t, out=t)
        t *= x
        t *= _INV_SQRT_2PI
        t += cdf
        t *= g
        return (t,)

    return record("gelu", x * cdf, (a,), backward)


# -- linear algebra and reductions --------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return record("matmul", out, (a, b), backward)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return record("concat", out, tuple(tensors), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return record("transpose", np.transpose(a.data, axes), (a,),
                  lambda g: (np.transpose(g, inverse),))


def take(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return record("take", a.data[index], (a,), backward)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return record("broadcast", np.broadcast_to(a.data, shape).copy(), (a,),
                  lambda g: (unbroadcast(g, a.shape),))


# -- numeric helpers (not taped) -----------------------------------------------

def softplus_np(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ContractError("inverse softplus needs positive values")
    return y + np.log(-np.expm1(-y))


def gelu_np(x):
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x * _SQRT_HALF))


# -- optimisation ----------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update of every entry in ``grads``.

    ``params`` entries without a gradient are returned untouched, which is how
    freeze training masks layers. Returns ``(new_params, state)``.
    """
    new = dict(params)
    t = state.t + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for key in sorted(grads):
        g = np.asarray(grads[key], dtype=np.float64)
        p = np.asarray(params[key], dtype=np.float64)
        if g.shape != p.shape:
            raise ContractError(f"gradient for {key!r} has shape {g.shape}, param {p.shape}")
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m, v = np.zeros_like(p), np.zeros_like(p)
        elif m.shape != p.shape:
            raise ContractError(f"optimizer state for {key!r} has shape {m.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[key], state.v[key] = m, v
        new[key] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.delta)
    state.t = t
    return new, state


@dataclass(frozen=True)
class LrSchedule:
    """Cyclic cosine annealing between ``lr_max`` and ``lr_min``."""

    lr_max: float = 1e-3
    lr_min: float = 1e-5
    cycle_length: int = 1000

    def __post_init__(self):
        if not (self.lr_max > 0 and self.lr_min > 0 and self.cycle_length > 0):
            raise ContractError("learning rates and cycle length must be positive")
        if self.lr_min > self.lr_max:
            raise ContractError("lr_min exceeds lr_max")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ContractError("epoch must be non-negative")
    phase = (epoch % schedule.cycle_length) / schedule.cycle_length
    return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + math.cos(math.pi * phase))
