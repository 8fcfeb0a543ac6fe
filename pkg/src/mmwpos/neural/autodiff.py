"""Reverse-mode automatic differentiation over float64 numpy arrays.

Each primitive computes its value eagerly and records a closure that maps
the output gradient to input gradients. ``Tensor.backward`` walks the
recorded graph in reverse topological order.

Complex quantities are carried as real tensors whose last axis has size 2
holding (real, imaginary).
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class AutodiffError(RuntimeError):
    pass


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, parents: Sequence["Tensor"] = (),
                 backward: Optional[Callable] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into the ``grad`` slot of every leaf
        that requires gradients."""
        if not self.requires_grad:
            raise AutodiffError("tensor has no recorded forward pass to differentiate")
        if grad is None:
            if self.value.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient {grad.shape} does not match output {self.shape}")

        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = pg if k not in grads else grads[k] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(value, req, parents if req else (), backward if req else None)


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from exc


# -- elementwise ---------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b)
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b)
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b)
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b)
    out = a.value / b.value
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.value * c, (a,), lambda g: (g * c,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


# -- linear algebra ---------------------------------------------------------------

def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` with ``x`` (batch, in), ``W`` (in, out), ``b`` (out,)."""
    if x.value.ndim != 2 or W.value.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"affine: x{x.shape} W{W.shape} b{b.shape}")
    return _node(x.value @ W.value + b.value, (x, W, b),
                 lambda g: (g @ W.value.T, x.value.T @ g, g.sum(axis=0)))


def ccontract(F: Tensor, a: Tensor) -> Tensor:
    """Batched complex ``F^T a``: ``F`` (S, N, T, 2), ``a`` (S, N, 2) ->
    (S, T, 2)."""
    if F.value.ndim != 4 or a.value.ndim != 3 or F.shape[:2] != a.shape[:2] or F.shape[3] != 2 or a.shape[2] != 2:
        raise ShapeError(f"ccontract: F{F.shape} a{a.shape}")
    Fc = F.value[..., 0] + 1j * F.value[..., 1]
    ac = a.value[..., 0] + 1j * a.value[..., 1]
    out = np.einsum("snt,sn->st", Fc, ac)

    def back(g):
        gc = g[..., 0] + 1j * g[..., 1]
        gF = gc[:, None, :] * np.conj(ac)[:, :, None]
        ga = np.einsum("st,snt->sn", gc, np.conj(Fc))
        return np.stack([gF.real, gF.imag], -1), np.stack([ga.real, ga.imag], -1)

    return _node(np.stack([out.real, out.imag], -1), (F, a), back)


def cmul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise complex product of (re, im) pair tensors."""
    if a.shape[-1] != 2 or b.shape[-1] != 2:
        raise ShapeError("cmul expects a trailing (re, im) axis")
    shape = _broadcast_shape(a, b)
    ar, ai = a.value[..., 0], a.value[..., 1]
    br, bi = b.value[..., 0], b.value[..., 1]
    out = np.stack([ar * br - ai * bi, ar * bi + ai * br], -1)

    def back(g):
        gr, gi = g[..., 0], g[..., 1]
        # dL/da = g * conj(b), dL/db = g * conj(a)
        ga = np.stack([gr * br + gi * bi, gi * br - gr * bi], -1)
        gb = np.stack([gr * ar + gi * ai, gi * ar - gr * ai], -1)
        return _unbroadcast(np.broadcast_to(ga, shape), a.shape), _unbroadcast(np.broadcast_to(gb, shape), b.shape)

    return _node(out, (a, b), back)


# -- shape and reductions -----------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return _node(out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(out, tuple(tensors), back)


def take(a: Tensor, index, axis: int = 0) -> Tensor:
    """Select entries along ``axis`` with an integer index array."""
    idx = np.asarray(index)

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (slice(None),) * (axis % a.value.ndim) + (idx,), g)
        return (out,)

    return _node(np.take(a.value, idx, axis=axis), (a,), back)


def sum_axes(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), back)


def mean(a: Tensor) -> Tensor:
    n = a.value.size
    return _node(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def sum_of_squares(a: Tensor) -> Tensor:
    return _node(np.sum(a.value * a.value), (a,), lambda g: (2.0 * g * a.value,))
