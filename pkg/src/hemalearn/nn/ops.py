"""Differentiable primitives over numpy arrays.

Each op computes its forward value eagerly and, when a tape is open,
records a backward closure. Ops preserve the dtype of their Tensor
operands (scalars are cast, never promoted), so 32-bit training and the
64-bit finite-difference harness share one implementation.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tape import Tensor, active_tape


def wrap(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # cast the non-Tensor operand to the Tensor's dtype to stop promotion
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return wrap(a), wrap(b)


def _record(out: Tensor, inputs, backward_fn) -> Tensor:
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data * b.data)

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _record(out, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data / b.data)

    def backward_fn(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _record(out, (a, b), backward_fn)


def neg(a) -> Tensor:
    a = wrap(a)
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul inner widths differ: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def backward_fn(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return _record(out, (a, b), backward_fn)


def relu(x) -> Tensor:
    x = wrap(x)
    out = Tensor(np.maximum(x.data, 0))

    def backward_fn(g):
        return (g * (x.data > 0),)

    return _record(out, (x,), backward_fn)


def exp(x) -> Tensor:
    x = wrap(x)
    value = np.exp(x.data)
    out = Tensor(value)
    return _record(out, (x,), lambda g: (g * value,))


def log(x) -> Tensor:
    x = wrap(x)
    out = Tensor(np.log(x.data))
    return _record(out, (x,), lambda g: (g / x.data,))


def power(x, exponent: float) -> Tensor:
    x = wrap(x)
    out = Tensor(x.data**exponent)

    def backward_fn(g):
        return (g * exponent * x.data ** (exponent - 1.0),)

    return _record(out, (x,), backward_fn)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = wrap(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def backward_fn(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape),)

    return _record(out, (x,), backward_fn)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = wrap(x)
    value = x.data.mean(axis=axis, keepdims=keepdims)
    out = Tensor(value)
    scale = 1.0 / (x.data.size / max(value.size, 1))

    def backward_fn(g):
        gg = g * scale
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, x.data.shape),)

    return _record(out, (x,), backward_fn)


def reshape(x, shape) -> Tensor:
    x = wrap(x)
    out = Tensor(x.data.reshape(shape))

    def backward_fn(g):
        return (g.reshape(x.data.shape),)

    return _record(out, (x,), backward_fn)


def transpose(x, axes=None) -> Tensor:
    x = wrap(x)
    out = Tensor(x.data.transpose(axes))
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward_fn(g):
        return (g.transpose(inverse),)

    return _record(out, (x,), backward_fn)


def take_rows(x, index) -> Tensor:
    """Select rows `index` of a 2-d tensor (used for node masks)."""
    x = wrap(x)
    idx = np.asarray(index)
    out = Tensor(x.data[idx])

    def backward_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (x,), backward_fn)


def gather_rows(x, index) -> Tensor:
    """out[i] = x[i, index[i]] for a 2-d tensor; backward scatter-adds."""
    x = wrap(x)
    idx = np.asarray(index)
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, idx])

    def backward_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _record(out, (x,), backward_fn)


def _softmax_array(a: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = a - a.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis: int = -1) -> Tensor:
    x = wrap(x)
    value = _softmax_array(x.data, axis)
    out = Tensor(value)

    def backward_fn(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        return ((g - inner) * value,)

    return _record(out, (x,), backward_fn)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    value = shifted - lse
    out = Tensor(value)

    def backward_fn(g):
        return (g - np.exp(value) * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), backward_fn)


def _sigmoid_array(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = wrap(x)
    value = _sigmoid_array(x.data)
    out = Tensor(value)

    def backward_fn(g):
        return (g * value * (1.0 - value),)

    return _record(out, (x,), backward_fn)


def softplus(x) -> Tensor:
    x = wrap(x)
    out = Tensor(np.logaddexp(0, x.data))

    def backward_fn(g):
        return (g * _sigmoid_array(x.data),)

    return _record(out, (x,), backward_fn)


def spmm(matrix, x) -> Tensor:
    """Constant sparse matrix times dense tensor; gradient flows to x."""
    x = wrap(x)
    out = Tensor(np.asarray(matrix @ x.data))

    def backward_fn(g):
        return (np.asarray(matrix.T @ g),)

    return _record(out, (x,), backward_fn)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Stable row softmax on a plain matrix (no tape involvement)."""
    a = np.asarray(m)
    if a.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got shape {a.shape}")
    return _softmax_array(a, axis=-1)
