"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` whenever
one of their inputs is watched by it (a parameter with ``requires_grad`` or
an output of an earlier record). Outside a tape nothing is recorded, which is
how inference runs.

    >>> w = Tensor([3.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = (w * w).sum()
    >>> backward(y, tape)[w].data
    array([6.])
"""
from __future__ import annotations

import threading
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .. import kernels

_local = threading.local()


def _stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Record(NamedTuple):
    out: "Tensor"
    inputs: tuple
    backward: Callable


class Tape:
    """Ordered record of primitive operations."""

    def __init__(self):
        self.records: list[Record] = []
        self._produced: set[int] = set()

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.records)

    def watches(self, t: "Tensor") -> bool:
        return t.requires_grad or id(t) in self._produced

    def holds(self, t: "Tensor") -> bool:
        return id(t) in self._produced


class Tensor:
    """Row-major float64 array plus a ``requires_grad`` flag."""

    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.asarray(arr, dtype=np.float64)
        t.requires_grad = False
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{flag}{label})"

    def __len__(self):
        return len(self.data)

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, inputs: Sequence[Tensor], fn: Callable) -> Tensor:
    tape = active_tape()
    if tape is not None and any(tape.watches(t) for t in inputs):
        tape.records.append(Record(out, tuple(inputs), fn))
        tape._produced.add(id(out))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor._wrap(np.where(mask, x.data, 0.0))
    return _record(out, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    out = Tensor._wrap(np.where(mask, x.data, slope * x.data))
    return _record(out, (x,), lambda g: (g * np.where(mask, 1.0, slope),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor._wrap(y)
    return _record(out, (x,), lambda g: (g * (1.0 - y * y),))


# -- linear algebra and shape ---------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim not in (1, 2):
        raise ValueError(f"matmul supports (n,k)@(k,m) and (k,)@(k,m); got {a.shape}@{b.shape}")
    out = Tensor._wrap(a.data @ b.data)

    def back(g):
        if a.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), back)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor._wrap(x.data.reshape(shape))
    return _record(out, (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=axis))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def take_rows(x: Tensor, index) -> Tensor:
    """Rows ``x[index]``; repeated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    out = Tensor._wrap(x.data[index])
    return _record(out, (x,), lambda g: (kernels.segment_sum(g, index, n),))


# -- reductions -------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    out = Tensor._wrap(np.sum(x.data))
    return _record(out, (x,), lambda g: (np.full(x.shape, float(g)),))


def mean_rows(x: Tensor) -> Tensor:
    n = x.shape[0]
    out = Tensor._wrap(x.data.mean(axis=0))
    return _record(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def max_rows(x: Tensor) -> Tensor:
    """Column-wise max; gradient goes to the lowest-index maximal row."""
    arg = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1]) if x.ndim == 2 else None
    if x.ndim == 2:
        out = Tensor._wrap(x.data[arg, cols])
    else:
        out = Tensor._wrap(x.data[arg])

    def back(g):
        grad = np.zeros(x.shape)
        if x.ndim == 2:
            grad[arg, cols] = g
        else:
            grad[arg] = g
        return (grad,)

    return _record(out, (x,), back)


# -- segmented ops over edge lists ----------------------------------------

def segment_sum(x: Tensor, index, n: int) -> Tensor:
    """Sum rows of ``x`` into ``n`` buckets given by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    out = Tensor._wrap(kernels.segment_sum(x.data, index, n))
    return _record(out, (x,), lambda g: (g[index],))


def segment_softmax(x: Tensor, index, n: int) -> Tensor:
    """Softmax of a 1-D tensor within each bucket of ``index``."""
    index = np.asarray(index, dtype=np.int64)
    alpha = kernels.segment_softmax(x.data, index, n)
    out = Tensor._wrap(alpha)
    return _record(out, (x,), lambda g: (kernels.segment_softmax_grad(alpha, g, index, n),))


# -- losses -----------------------------------------------------------------

def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max()
    lse = np.log(np.exp(shifted).sum())
    y = shifted - lse
    out = Tensor._wrap(y)
    p = np.exp(y)
    return _record(out, (x,), lambda g: (g - p * g.sum(),))


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """``-log softmax(logits)[label]`` for a single 1-D logit vector."""
    shifted = logits.data - logits.data.max()
    ex = np.exp(shifted)
    total = ex.sum()
    loss = np.log(total) - shifted[label]
    out = Tensor._wrap(loss)

    def back(g):
        grad = ex / total
        grad[label] -= 1.0
        return (g * grad,)

    return _record(out, (logits,), back)


# -- gradients -------------------------------------------------------------

def backward(output: Tensor, tape: Tape) -> dict:
    """Gradients of a scalar ``output`` for every watched parameter it reaches.

    Returns a dict mapping each parameter tensor to a :class:`Tensor` holding
    its gradient. Intermediate gradients are discarded.
    """
    if output.data.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {output.shape}")
    if not tape.holds(output):
        raise ValueError("output tensor was not produced on this tape")
    grads = {id(output): np.ones_like(output.data)}
    leaves = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for t, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not tape.watches(t):
                continue
            key = id(t)
            grads[key] = grads[key] + gi if key in grads else gi
            if t.requires_grad and not tape.holds(t):
                leaves[key] = t
    return {t: Tensor._wrap(np.asarray(grads[k]).reshape(t.shape)) for k, t in leaves.items()}
