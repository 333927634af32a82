"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every arithmetic primitive applied to a :class:`Var` appends one node to the
active :class:`Tape`. The reverse sweep walks that list backwards, so the
gradient is exact for the computation that was actually executed
(discretize-then-optimize when the computation is an ODE solve).

Plain ndarrays and floats mixed into an expression are treated as constants.
Tapes are thread-local; a tape is never shared between calls.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

_state = threading.local()


def _stack() -> list:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node on the tape: a value plus the rule to push gradients to parents."""

    __slots__ = ("value", "parents", "vjp", "index", "tape")
    __array_priority__ = 100.0
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None, tape: "Tape | None" = None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp
        self.tape = tape if tape is not None else current_tape()
        self.index = self.tape._record(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None):
        return vsum(self, axis)


class Tape:
    """Ordered record of the primitives executed while the tape is active."""

    def __init__(self):
        self.nodes: list[Var] = []

    def _record(self, var: Var) -> int:
        self.nodes.append(var)
        return len(self.nodes) - 1

    def variable(self, value) -> Var:
        return Var(value, tape=self)

    def gradient(self, output: Var, wrt: list[Var]) -> list[np.ndarray]:
        """Reverse sweep from a scalar ``output``; returns d output / d wrt."""
        if output.tape is not self:
            raise ValueError("output was not recorded on this tape")
        if output.value.size != 1:
            raise ValueError("gradient() needs a scalar output")
        grads: list = [None] * len(self.nodes)
        grads[output.index] = np.ones_like(output.value)
        for node in reversed(self.nodes[: output.index + 1]):
            g = grads[node.index]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if not isinstance(parent, Var) or pg is None:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=float), parent.value.shape)
                if grads[parent.index] is None:
                    grads[parent.index] = pg
                else:
                    grads[parent.index] = grads[parent.index] + pg
        return [
            grads[v.index] if grads[v.index] is not None else np.zeros_like(v.value)
            for v in wrt
        ]


def current_tape() -> Tape:
    stack = _stack()
    if not stack:
        raise RuntimeError("no active tape; use `with recording() as tape:`")
    return stack[-1]


@contextmanager
def recording():
    tape = Tape()
    stack = _stack()
    stack.append(tape)
    try:
        yield tape
    finally:
        stack.pop()


def value(x):
    return x.value if isinstance(x, Var) else x


def is_var(x) -> bool:
    return isinstance(x, Var)


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _make(val, parents, vjp):
    tape = next(p.tape for p in parents if isinstance(p, Var))
    return Var(val, parents, vjp, tape=tape)


def add(a, b):
    return _make(_val(a) + _val(b), (a, b), lambda g: (g, g))


def sub(a, b):
    return _make(_val(a) - _val(b), (a, b), lambda g: (g, -g))


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b):
    av, bv = _val(a), _val(b)
    return _make(av / bv, (a, b), lambda g: (g / bv, -g * av / (bv * bv)))


def power(a, p: float):
    av = _val(a)
    return _make(av**p, (a,), lambda g: (g * p * av ** (p - 1),))


def matmul(a, b):
    av, bv = _val(a), _val(b)

    def vjp(g):
        ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim > 1 else np.multiply.outer(g, bv)
        gb = np.swapaxes(av, -1, -2) @ g if av.ndim > 1 else np.multiply.outer(av, g)
        return ga, gb

    return _make(av @ bv, (a, b), vjp)


def tanh(a):
    out = np.tanh(_val(a))
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sin(a):
    av = _val(a)
    return _make(np.sin(av), (a,), lambda g: (g * np.cos(av),))


def cos(a):
    av = _val(a)
    return _make(np.cos(av), (a,), lambda g: (-g * np.sin(av),))


def exp(a):
    out = np.exp(_val(a))
    return _make(out, (a,), lambda g: (g * out,))


def vsum(a, axis=None):
    av = _val(a)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape),)

    return _make(av.sum(axis=axis), (a,), vjp)


def getitem(a, key):
    av = _val(a)

    basic = isinstance(key, (slice, int)) or (
        isinstance(key, tuple) and all(isinstance(k, (slice, int)) for k in key)
    )

    def vjp(g):
        out = np.zeros_like(av)
        if basic:
            out[key] += g
        else:
            np.add.at(out, key, g)
        return (out,)

    return _make(av[key], (a,), vjp)


def reshape(a, shape):
    av = _val(a)
    return _make(av.reshape(shape), (a,), lambda g: (np.reshape(g, av.shape),))


def concat(items, axis=-1):
    vals = [_val(x) for x in items]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    if not any(isinstance(x, Var) for x in items):
        return np.concatenate(vals, axis=axis)
    return _make(np.concatenate(vals, axis=axis), tuple(items), vjp)


def norm(a, axis=-1):
    """Euclidean norm along ``axis`` with the zero subgradient at the origin."""
    av = _val(a)
    n = np.sqrt(np.sum(av * av, axis=axis))

    def vjp(g):
        safe = np.where(n > 0.0, n, 1.0)
        scale = np.where(n > 0.0, g / safe, 0.0)
        return (np.expand_dims(scale, axis) * av,)

    return _make(n, (a,), vjp)


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    return _make(
        np.where(cond, _val(a), _val(b)),
        (a, b),
        lambda g: (np.where(cond, g, 0.0), np.where(cond, 0.0, g)),
    )


# Dispatchers usable on either ndarrays or Vars.


def ftanh(x):
    return tanh(x) if isinstance(x, Var) else np.tanh(x)


def fsin(x):
    return sin(x) if isinstance(x, Var) else np.sin(x)


def fcos(x):
    return cos(x) if isinstance(x, Var) else np.cos(x)


def fconcat(items, axis=-1):
    if any(isinstance(x, Var) for x in items):
        return concat(items, axis=axis)
    return np.concatenate([np.asarray(x, dtype=float) for x in items], axis=axis)


def fnorm(x, axis=-1):
    if isinstance(x, Var):
        return norm(x, axis=axis)
    return np.sqrt(np.sum(np.asarray(x) ** 2, axis=axis))


def fwhere(cond, a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return where(cond, a, b)
    return np.where(cond, a, b)
