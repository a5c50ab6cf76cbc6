"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op is a pure function of its inputs. When a :class:`Tape` is active the
op appends a node holding its forward function and vector-Jacobian product, so
:func:`backward` can walk the tape in reverse and :meth:`Tape.replay` can
recompute the forward pass from the recorded functions alone.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

_ids = itertools.count()
_active: list["Tape"] = []


class ShapeError(ValueError):
    pass


class Tensor:
    """Immutable float64 array with an identity used by the tape."""

    __slots__ = ("data", "id", "name")

    def __init__(self, data, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.id = next(_ids)
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64, order="C")
        arr.setflags(write=False)
        t.data = arr
        t.id = next(_ids)
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    out: Tensor
    fn: Callable
    vjp: Callable


class Tape:
    """Records ops executed inside its ``with`` block."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _active.append(self)
        return self

    def __exit__(self, *exc):
        _active.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def replay(self) -> dict[int, np.ndarray]:
        """Recompute every recorded output in tape order from leaf values."""
        values: dict[int, np.ndarray] = {}
        for node in self.nodes:
            args = [values.get(t.id, t.data) for t in node.inputs]
            values[node.out.id] = np.asarray(node.fn(*args), dtype=np.float64)
        return values


def current_tape() -> Tape | None:
    return _active[-1] if _active else None


def _op(name: str, fn: Callable, vjp: Callable, *inputs: Tensor) -> Tensor:
    out = Tensor._wrap(fn(*(t.data for t in inputs)))
    if _active:
        _active[-1].nodes.append(Node(name, inputs, out, fn, vjp))
    return out


class Gradients:
    """Gradient arrays keyed by tensor identity; missing entries are zero."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(t.id)
        return np.zeros(t.shape) if g is None else g

    def __contains__(self, t: Tensor) -> bool:
        return t.id in self._grads

    def for_params(self, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
        return {name: self[p] for name, p in params.items()}


def backward(tape: Tape, loss: Tensor) -> Gradients:
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.id: np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        g = grads.get(node.out.id)
        if g is None:
            continue
        in_grads = node.vjp(g, node.out.data, *(t.data for t in node.inputs))
        for t, gi in zip(node.inputs, in_grads):
            if gi is None:
                continue
            prev = grads.get(t.id)
            grads[t.id] = gi if prev is None else prev + gi
    return Gradients(grads)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(opname: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} differ")


# elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _op("add", np.add, lambda g, y, x1, x2: (g, g), a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _op("sub", np.subtract, lambda g, y, x1, x2: (g, -g), a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return _op("mul", np.multiply, lambda g, y, x1, x2: (g * x2, g * x1), a, b)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _op("scale", lambda x: x * c, lambda g, y, x: (g * c,), as_tensor(a))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x + b where b matches the last axis of x (the only broadcast allowed)."""
    if b.shape != x.shape[-1:]:
        raise ShapeError(f"add_bias: bias {b.shape} does not match last axis of {x.shape}")
    lead = tuple(range(x.data.ndim - 1))
    return _op("add_bias", np.add, lambda g, y, xv, bv: (g, g.sum(axis=lead)), x, b)


def absolute(x: Tensor) -> Tensor:
    return _op("abs", np.abs, lambda g, y, xv: (g * np.sign(xv),), x)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return _op("tanh", np.tanh, lambda g, y, xv: (g * (1.0 - y * y),), x)
    if kind == "sigmoid":
        return _op("sigmoid", expit, lambda g, y, xv: (g * y * (1.0 - y),), x)
    if kind == "relu":
        return _op("relu", lambda v: np.maximum(v, 0.0), lambda g, y, xv: (g * (xv > 0),), x)
    raise ValueError(f"unknown activation {kind!r}")


def tanh(x):
    return activation(x, "tanh")


def sigmoid(x):
    return activation(x, "sigmoid")


def relu(x):
    return activation(x, "relu")


# linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading (batch) axes must be identical, no broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.ndim != b.data.ndim:
        raise ShapeError(f"matmul: incompatible ranks {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} @ {b.shape}")

    def vjp(g, y, av, bv):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return _op("matmul", np.matmul, vjp, a, b)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b) for x of any rank; leading axes are folded explicitly."""
    lead = x.shape[:-1]
    flat = reshape(x, (int(np.prod(lead)) if lead else 1, x.shape[-1]))
    out = matmul(flat, w)
    if b is not None:
        out = add_bias(out, b)
    return reshape(out, lead + (w.shape[1],))


def attend(weights: Tensor, values: Tensor) -> Tensor:
    """Weighted sum over keys, ``weights (..., q, k)`` against ``values (..., k, d)``.

    The key-axis reduction sorts the terms first so the result is independent
    of key order to the last bit.
    """
    if weights.shape[:-2] != values.shape[:-2] or weights.shape[-1] != values.shape[-2]:
        raise ShapeError(f"attend: shape mismatch {weights.shape} with {values.shape}")

    def fn(w, v):
        terms = w[..., :, :, None] * v[..., None, :, :]
        return np.sort(terms, axis=-2).sum(axis=-2)

    def vjp(g, y, w, v):
        return g @ np.swapaxes(v, -1, -2), np.swapaxes(w, -1, -2) @ g

    return _op("attend", fn, vjp, weights, values)


# normalisation -----------------------------------------------------------

def _masked_softmax(x: np.ndarray, axis: int, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    # sorted reduction keeps the normaliser independent of element order
    s = np.sort(e, axis=axis).sum(axis=axis, keepdims=True)
    return e / s


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-shifted softmax. ``mask`` (broadcastable bool, True = keep) zeroes
    excluded entries exactly; at least one entry per row must be kept."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for rank {x.data.ndim}")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not np.all(mask.any(axis=axis)):
            raise ValueError("softmax: a row is fully masked")

    def vjp(g, y, xv):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _op("softmax", lambda v: _masked_softmax(v, axis, mask), vjp, x)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    def fn(v):
        m = np.max(v, axis=axis, keepdims=True)
        return v - m - np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))

    def vjp(g, y, v):
        return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)

    return _op("log_softmax", fn, vjp, x)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine params {gamma.shape}/{beta.shape} vs width {d}")
    lead = tuple(range(x.data.ndim - 1))

    def fn(v, gm, bt):
        mu = v.mean(axis=-1, keepdims=True)
        var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
        return (v - mu) / np.sqrt(var + eps) * gm + bt

    def vjp(g, y, v, gm, bt):
        mu = v.mean(axis=-1, keepdims=True)
        var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (v - mu) * inv
        gx_hat = g * gm
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _op("layer_norm", fn, vjp, x, gamma, beta)


# shape ops ---------------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    src = x.shape
    return _op("reshape", lambda v: v.reshape(shape), lambda g, y, v: (g.reshape(src),), x)


def flatten(x: Tensor, start: int = 1) -> Tensor:
    return reshape(x, x.shape[:start] + (int(np.prod(x.shape[start:])),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _op("transpose", lambda v: np.transpose(v, axes),
               lambda g, y, v: (np.transpose(g, inv),), x)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = tuple(xs)
    nd = xs[0].data.ndim
    ax = axis % nd
    for t in xs[1:]:
        if t.data.ndim != nd or t.shape[:ax] + t.shape[ax + 1:] != xs[0].shape[:ax] + xs[0].shape[ax + 1:]:
            raise ShapeError(f"concat: {t.shape} incompatible with {xs[0].shape} on axis {axis}")
    splits = np.cumsum([t.shape[ax] for t in xs])[:-1]

    def vjp(g, y, *vals):
        return tuple(np.split(g, splits, axis=ax))

    return _op("concat", lambda *vals: np.concatenate(vals, axis=ax), vjp, *xs)


def index(x: Tensor, key) -> Tensor:
    """Basic or advanced indexing; gradients scatter-add back."""
    src = x.shape

    def vjp(g, y, v):
        out = np.zeros(src)
        np.add.at(out, key, g)
        return (out,)

    return _op("index", lambda v: v[key], vjp, x)


def tile_rows(x: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of ``x`` along a new leading axis."""
    return _op("tile_rows", lambda v: np.broadcast_to(v, (n,) + v.shape).copy(),
               lambda g, y, v: (g.sum(axis=0),), x)


# reductions --------------------------------------------------------------

def reduce_sum(x: Tensor, axis=None) -> Tensor:
    src = x.shape

    def vjp(g, y, v):
        if axis is None:
            return (np.broadcast_to(g, src).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), src).copy(),)

    return _op("sum", lambda v: np.sum(v, axis=axis), vjp, x)


def reduce_mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(reduce_sum(x, axis), 1.0 / n)


# convolution -------------------------------------------------------------

def _conv_out(h: int, k: int, stride: int, pad: int) -> int:
    return (h + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """NCHW cross-correlation with an OIhw kernel via im2col."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias {b.shape} vs {w.shape[0]} output channels")
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho, Wo = _conv_out(H, kh, stride, pad), _conv_out(W, kw, stride, pad)

    def cols_of(xv):
        xp = np.pad(xv, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = np.empty((B, Ho, Wo, C, kh, kw))
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
                cols[:, :, :, :, i, j] = patch.transpose(0, 2, 3, 1)
        return cols.reshape(B * Ho * Wo, C * kh * kw)

    def fn(xv, wv, bv):
        out = cols_of(xv) @ wv.reshape(O, -1).T + bv
        return out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def vjp(g, y, xv, wv, bv):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gw = (g2.T @ cols_of(xv)).reshape(wv.shape)
        gcols = (g2 @ wv.reshape(O, -1)).reshape(B, Ho, Wo, C, kh, kw)
        gxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, pad:pad + H, pad:pad + W]
        return gx, gw, g2.sum(axis=0)

    return _op("conv2d", fn, vjp, x, w, b)
