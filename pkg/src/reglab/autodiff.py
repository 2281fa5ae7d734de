"""Minimal reverse-mode automatic differentiation over float64 matrices.

A ``Tensor`` wraps a 2-D numpy array plus a gradient slot and a backward
closure. Operations record their parents; ``Tensor.backward()`` on a
scalar result walks the graph in reverse topological order and
accumulates gradients into every tensor created with
``requires_grad=True``.

The operation set is exactly the closure needed by the network blocks:
matmul, transpose, broadcast add/sub/mul/div, relu, sigmoid, log, sqrt,
clip, row softmax, sum/mean reductions, column concatenation and channel
shuffling. Scalars ride along as (1, 1) tensors.

Graphs are cheap throwaway objects: build, call backward once, drop.
Inference code wraps forwards in ``no_grad()`` so no graph is recorded.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import shuffle_permutation

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Context manager that suspends graph recording."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_value(x) -> np.ndarray:
    if isinstance(x, Tensor):
        raise TypeError("pass Tensor operands directly, not through _as_value")
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    if v.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
    return v


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    for ax in range(2):
        if shape[ax] == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = _as_value(value)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- plumbing -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.value.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    @staticmethod
    def _make(value: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.value = value
        out.grad = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        return out

    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        value = a.value + b.value

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._make(value, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            if a.requires_grad:
                a._accumulate(-g)

        return Tensor._make(-a.value, (a,), backward)

    def __sub__(self, other):
        return self + (-Tensor._coerce(other))

    def __rsub__(self, other):
        return Tensor._coerce(other) + (-self)

    def __mul__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        value = a.value * b.value

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.value, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.value, b.shape))

        return Tensor._make(value, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        value = a.value / b.value

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.value, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.value / (b.value * b.value), b.shape))

        return Tensor._make(value, (a, b), backward)

    def __rtruediv__(self, other):
        return Tensor._coerce(other) / self

    def matmul(self, other: "Tensor") -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self, other
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: inner dimensions differ, lhs {a.shape} vs rhs {b.shape}")
        value = a.value @ b.value

        def backward(g):
            if a.requires_grad:
                a._accumulate(g @ b.value.T)
            if b.requires_grad:
                b._accumulate(a.value.T @ g)

        return Tensor._make(value, (a, b), backward)

    __matmul__ = matmul

    @property
    def T(self) -> "Tensor":
        a = self

        def backward(g):
            if a.requires_grad:
                a._accumulate(g.T)

        return Tensor._make(a.value.T.copy(), (a,), backward)

    # -- elementwise nonlinearities -------------------------------------------

    def relu(self) -> "Tensor":
        a = self
        mask = a.value > 0.0

        def backward(g):
            if a.requires_grad:
                a._accumulate(g * mask)

        return Tensor._make(np.where(mask, a.value, 0.0), (a,), backward)

    def sigmoid(self) -> "Tensor":
        a = self
        v = a.value
        y = np.empty_like(v)
        pos = v >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        e = np.exp(v[~pos])
        y[~pos] = e / (1.0 + e)

        def backward(g):
            if a.requires_grad:
                a._accumulate(g * y * (1.0 - y))

        return Tensor._make(y, (a,), backward)

    def log(self) -> "Tensor":
        a = self

        def backward(g):
            if a.requires_grad:
                a._accumulate(g / a.value)

        return Tensor._make(np.log(a.value), (a,), backward)

    def sqrt(self) -> "Tensor":
        a = self
        y = np.sqrt(a.value)

        def backward(g):
            if a.requires_grad:
                a._accumulate(g * 0.5 / y)

        return Tensor._make(y, (a,), backward)

    def clip(self, lo: float, hi: float) -> "Tensor":
        a = self
        inside = (a.value > lo) & (a.value < hi)

        def backward(g):
            if a.requires_grad:
                a._accumulate(g * inside)

        return Tensor._make(np.clip(a.value, lo, hi), (a,), backward)

    # -- structured ops --------------------------------------------------------

    def softmax_rows(self) -> "Tensor":
        a = self
        shifted = a.value - a.value.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=1, keepdims=True)

        def backward(g):
            if a.requires_grad:
                inner = (g * y).sum(axis=1, keepdims=True)
                a._accumulate(y * (g - inner))

        return Tensor._make(y, (a,), backward)

    def sum(self, axis: int | None = None) -> "Tensor":
        a = self
        if axis is None:
            value = np.array([[a.value.sum()]])
        else:
            value = a.value.sum(axis=axis, keepdims=True)

        def backward(g):
            if a.requires_grad:
                a._accumulate(np.broadcast_to(g, a.shape).copy())

        return Tensor._make(value, (a,), backward)

    def mean(self, axis: int | None = None) -> "Tensor":
        a = self
        count = a.value.size if axis is None else a.shape[axis]
        return self.sum(axis) * (1.0 / count)

    def channel_shuffle(self, groups: int = 2) -> "Tensor":
        a = self
        perm = shuffle_permutation(a.shape[1], groups)
        inv = np.argsort(perm)

        def backward(g):
            if a.requires_grad:
                a._accumulate(g[:, inv])

        return Tensor._make(a.value[:, perm], (a,), backward)

    # -- graph traversal ---------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar (size-1) tensor."""
        if self.value.size != 1:
            raise ContractError(
                f"backward: root must be scalar, got shape {self.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.value))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def concat_cols(tensors: list[Tensor] | tuple[Tensor, ...]) -> Tensor:
    """Concatenate tensors along columns; all must share the row count."""
    if not tensors:
        raise ContractError("concat_cols: empty tensor list")
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.shape[0] != rows:
            raise ShapeError(
                f"concat_cols: row counts differ, {t.shape} vs ({rows}, *)"
            )
    value = np.concatenate([t.value for t in tensors], axis=1)
    parents = tuple(tensors)
    offsets = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(parents, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._accumulate(g[:, lo:hi])

    return Tensor._make(value, parents, backward)
