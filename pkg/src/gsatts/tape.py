"""Minimal reverse-mode automatic differentiation over numpy arrays.

Single-threaded tape: each operation records its parents and a closure
that maps the output gradient to parent gradients. Arrays keep whatever
float dtype they were given, so the same model code runs in float32 for
training and float64 for finite-difference verification.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "shift",
    "matmul",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "sigmoid",
    "relu",
    "gelu",
    "tsum",
    "tmean",
    "reshape",
    "swapaxes",
    "getitem",
    "concat",
    "softmax",
    "conv1d_same",
    "gather_rows",
    "repeat_rows",
]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple["Tensor", ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # Operator sugar keeps the model code readable. Python scalars route
    # through scale/shift so float32 graphs are not promoted to float64.
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, other)
        return add(self, _wrap(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -other)
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return shift(neg(self), other)
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self) -> None:
        """Accumulate gradients of this (scalar or array) tensor's sum."""
        order: List[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, grad in zip(node._parents, node._backward(node.grad)):
                if grad is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = grad.copy() if grad.base is not None else grad
                else:
                    parent.grad = parent.grad + grad


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value))


def _node(data, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- arithmetic -----------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar without touching the array dtype."""
    return _node(a.data * factor, (a,), lambda g: (g * factor,))


def shift(a: Tensor, offset: float) -> Tensor:
    """Add a python scalar without touching the array dtype."""
    return _node(a.data + offset, (a,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a_vec = a.data.ndim == 1
    b_vec = b.data.ndim == 1

    def backward(g):
        if a_vec and b_vec:
            return g * b.data, g * a.data
        if a_vec:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = a.data[:, None] * g[None, :]
            return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)
        if b_vec:
            ga = g[..., :, None] * b.data[None, :]
            gb = np.swapaxes(a.data, -1, -2) @ g
            return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _node(a.data @ b.data, (a, b), backward)


# -- pointwise ------------------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _node(out_data, (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)
    return _node(out_data, (a,), lambda g: (g / (2.0 * out_data),))


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)
    return _node(out_data, (a,), lambda g: (g * (1.0 - out_data * out_data),))


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))
    return _node(out_data, (a,), lambda g: (g * out_data * (1.0 - out_data),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU; smooth, so finite differences stay clean."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _node(x * cdf, (a,), backward)


# -- reductions and reshaping ------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).astype(a.data.dtype, copy=True),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    return _node(
        np.swapaxes(a.data, axis1, axis2),
        (a,),
        lambda g: (np.swapaxes(g, axis1, axis2),),
    )


def getitem(a: Tensor, idx) -> Tensor:
    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _node(a.data[idx], (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for k in range(len(tensors)):
            slicer[axis] = slice(offsets[k], offsets[k + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis with a detached max shift for stability."""
    shift = constant(a.data.max(axis=-1, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, tsum(e, axis=-1, keepdims=True))


# -- structured ops ------------------------------------------------------------------


def conv1d_same(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1-D convolution over time with zero same-padding.

    ``x`` is (L, C_in), ``w`` is (K, C_in, C_out) with odd K, ``b`` is (C_out,).
    """
    k, c_in, c_out = w.data.shape
    length = x.data.shape[0]
    pad = (k - 1) // 2
    padded = np.zeros((length + 2 * pad, c_in), dtype=x.data.dtype)
    padded[pad : pad + length] = x.data
    windows = sliding_window_view(padded, k, axis=0)  # (L, C_in, K)
    flat = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(length, k * c_in)
    w_flat = w.data.reshape(k * c_in, c_out)
    out = flat @ w_flat + b.data

    def backward(g):
        gw = (flat.T @ g).reshape(k, c_in, c_out)
        gb = g.sum(axis=0)
        gflat = (g @ w_flat.T).reshape(length, k, c_in)
        gpad = np.zeros_like(padded)
        for offset in range(k):
            gpad[offset : offset + length] += gflat[:, offset, :]
        return gpad[pad : pad + length].copy(), gw, gb

    return _node(out, (x, w, b), backward)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _node(table.data[ids], (table,), backward)


def repeat_rows(x: Tensor, counts: np.ndarray) -> Tensor:
    """Repeat row i of ``x`` counts[i] times (rows with count 0 are dropped)."""
    counts = np.asarray(counts, dtype=np.int64)
    index = np.repeat(np.arange(x.data.shape[0]), counts)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _node(x.data[index], (x,), backward)
