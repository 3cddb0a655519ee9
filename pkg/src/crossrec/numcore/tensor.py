"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps a float64 ndarray and records the op that produced it.
Calling :meth:`Tensor.backward` on a scalar walks the recorded graph in
reverse topological order and accumulates gradients into every tensor
created with ``requires_grad=True``.

Numeric conventions used by every op that needs them:

* sigmoid / exp clamp their pre-activation to ``[-30, 30]``
* log clamps its argument to ``>= 1e-12``
* gradients of clamped regions are zero where the true derivative is zero
"""

from __future__ import annotations

import numpy as np

PREACT_CLAMP = 30.0
LOG_FLOOR = 1e-12


class NumericError(ArithmeticError):
    """Raised when a computation produces NaN or Inf."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # collapse leading dims that were added by broadcasting
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # then sum over axes that were stretched from size 1
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Node in the autodiff graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative DFS, long concat sequences overflow recursion
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / b.data)
        if b.requires_grad:
            b._accumulate(-g * a.data / (b.data * b.data))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(data, (a, b), backward)


# -- nonlinearities ----------------------------------------------------------


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    z = np.clip(x.data, -PREACT_CLAMP, PREACT_CLAMP)
    y = 1.0 / (1.0 + np.exp(-z))

    def backward(g):
        # derivative of the clamped region is ~1e-13; y(1-y) matches it there
        x._accumulate(g * y * (1.0 - y))

    return _make(y, (x,), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - y * y))

    return _make(y, (x,), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0.0
    y = np.where(mask, x.data, 0.0)

    def backward(g):
        x._accumulate(g * mask)

    return _make(y, (x,), backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    inside = np.abs(x.data) <= PREACT_CLAMP
    y = np.exp(np.clip(x.data, -PREACT_CLAMP, PREACT_CLAMP))

    def backward(g):
        # outside the clamp the forward value is constant, so the true
        # derivative is zero; an unmasked e^30 factor would wreck gradients
        x._accumulate(g * y * inside)

    return _make(y, (x,), backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    clamped = np.maximum(x.data, LOG_FLOOR)
    inside = x.data >= LOG_FLOOR
    y = np.log(clamped)

    def backward(g):
        x._accumulate(g * inside / clamped)

    return _make(y, (x,), backward)


def power(base, expo) -> Tensor:
    """``base ** expo`` for strictly positive ``base``, both differentiable."""
    base, expo = as_tensor(base), as_tensor(expo)
    if np.any(base.data <= 0.0):
        raise NumericError("power() requires strictly positive base")
    y = base.data ** expo.data
    logb = np.log(base.data)

    def backward(g):
        if base.requires_grad:
            base._accumulate(g * y * expo.data / base.data)
        if expo.requires_grad:
            expo._accumulate(g * y * logb)

    return _make(y, (base, expo), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        x._accumulate(y * (g - dot))

    return _make(y, (x,), backward)


# -- shape ops ---------------------------------------------------------------


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.data.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(ge, x.data.shape))

    return _make(y, (x,), backward)


def tmean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis), 1.0 / n)


def concat(parts: list, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return _make(data, tuple(parts), backward)


def take_col(x, j: int) -> Tensor:
    """Column ``j`` of a 2-D tensor, kept as shape ``(n, 1)``."""
    x = as_tensor(x)
    data = x.data[:, j : j + 1]

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, j : j + 1] = g
        x._accumulate(full)

    return _make(data, (x,), backward)


def where_const(mask: np.ndarray, const, x) -> Tensor:
    """``const`` where ``mask`` holds, tensor ``x`` elsewhere.

    ``mask`` and ``const`` are plain arrays; only ``x`` carries gradient.
    Used to mask out graph elements whose value must be pinned (e.g. a
    probability fixed to 1) without touching their upstream gradient.
    """
    x = as_tensor(x)
    keep = ~np.asarray(mask, dtype=bool)
    data = np.where(keep, x.data, const)

    def backward(g):
        x._accumulate(g * keep)

    return _make(data, (x,), backward)


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    """Raise :class:`NumericError` if ``arr`` contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr
