"""Dense float64 tensors with reverse-mode automatic differentiation.

Graphs are built eagerly: every op returns a Tensor holding a backward
closure over its parents. ``backward()`` on a scalar output walks the
graph in reverse topological order and accumulates gradients into every
tensor created with ``requires_grad=True``.

Every node's value is checked finite at creation, so a numeric blowup
raises at the op that produced it instead of surfacing as a NaN loss
three layers later. Inference code wraps calls in ``no_grad()`` to skip
graph construction entirely.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError

_grad_enabled = True


class no_grad:
    """Context manager disabling graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(arr):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite tensor value (shape {arr.shape})")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            # free graph bookkeeping as we go; values stay usable
            node._parents = ()
            node._backward = None

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _node(data, parents, backward):
    """Build an op-result tensor; skips bookkeeping when grads are off."""
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    _check_finite(arr)
    out.data = arr
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the parent's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


# elementwise ------------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), bwd)


def sub(a, b):
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), bwd)


def mul(a, b):
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), bwd)


def div(a, b):
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(a.data / b.data, (a, b), bwd)


def tanh(a):
    a = _lift(a)
    y = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - y * y))

    return _node(y, (a,), bwd)


def sigmoid(a):
    a = _lift(a)
    # clip keeps exp() finite in the tails; sigmoid saturates there anyway
    y = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))

    def bwd(g):
        _accum(a, g * y * (1.0 - y))

    return _node(y, (a,), bwd)


def exp(a):
    a = _lift(a)
    y = np.exp(a.data)

    def bwd(g):
        _accum(a, g * y)

    return _node(y, (a,), bwd)


def log(a):
    a = _lift(a)

    def bwd(g):
        _accum(a, g / a.data)

    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    return _node(y, (a,), bwd)


def square(a):
    a = _lift(a)

    def bwd(g):
        _accum(a, g * 2.0 * a.data)

    return _node(a.data * a.data, (a,), bwd)


def maximum(a, b):
    """Elementwise max; on ties the gradient routes to the first argument."""
    a, b = _lift(a), _lift(b)
    take_a = a.data >= b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * take_a, a.data.shape))
        _accum(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _node(np.where(take_a, a.data, b.data), (a, b), bwd)


# reductions -------------------------------------------------------------

def tsum(a, axis=None):
    a = _lift(a)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

    return _node(a.data.sum(axis=axis), (a,), bwd)


def logsumexp(a, axis=None):
    """log(sum(exp(x))) with the max-shift trick."""
    a = _lift(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    y = np.log(total) + m
    weights = shifted / total
    out = y.reshape(()) if axis is None else np.squeeze(y, axis=axis)

    def bwd(g):
        garr = np.asarray(g)
        if axis is None:
            _accum(a, garr.reshape(m.shape) * weights)
        else:
            _accum(a, np.expand_dims(garr, axis) * weights)

    return _node(out, (a,), bwd)


def log_softmax(a):
    """Log-softmax over a 1-D tensor."""
    a = _lift(a)
    if a.data.ndim != 1:
        raise ShapeError("log_softmax expects a vector")
    m = a.data.max()
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum()) + m
    y = a.data - lse
    p = np.exp(y)

    def bwd(g):
        _accum(a, g - p * g.sum())

    return _node(y, (a,), bwd)


def softmax(a):
    """Softmax over a 1-D tensor; strictly positive, sums to 1."""
    a = _lift(a)
    if a.data.ndim != 1:
        raise ShapeError("softmax expects a vector")
    shifted = np.exp(a.data - a.data.max())
    p = shifted / shifted.sum()

    def bwd(g):
        _accum(a, p * (g - (g * p).sum()))

    return _node(p, (a,), bwd)


# linear algebra ----------------------------------------------------------

def matmul(a, b):
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul {ad.shape} x {bd.shape}")

        def bwd(g):
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)

    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul {ad.shape} x {bd.shape}")

        def bwd(g):
            _accum(a, bd @ g)
            _accum(b, np.outer(ad, g))

    elif ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul {ad.shape} x {bd.shape}")

        def bwd(g):
            _accum(a, np.outer(g, bd))
            _accum(b, ad.T @ g)

    else:
        raise ShapeError(f"matmul unsupported ranks {ad.ndim} x {bd.ndim}")
    return _node(ad @ bd, (a, b), bwd)


# shape manipulation -------------------------------------------------------

def reshape(a, shape):
    a = _lift(a)
    old = a.data.shape

    def bwd(g):
        _accum(a, g.reshape(old))

    return _node(a.data.reshape(shape), (a,), bwd)


def concat(parts):
    """Concatenate 1-D tensors."""
    parts = [_lift(p) for p in parts]
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _node(np.concatenate([p.data for p in parts]), tuple(parts), bwd)


def stack(rows):
    """Stack 1-D tensors into a matrix (one per row)."""
    rows = [_lift(r) for r in rows]

    def bwd(g):
        for i, r in enumerate(rows):
            _accum(r, g[i])

    return _node(np.stack([r.data for r in rows]), tuple(rows), bwd)


def narrow(a, start, length):
    """Contiguous slice along axis 0."""
    a = _lift(a)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:start + length] = g
        _accum(a, full)

    return _node(a.data[start:start + length], (a,), bwd)


def pick(a, index):
    """Scalar element of a vector."""
    a = _lift(a)
    if a.data.ndim != 1:
        raise ShapeError("pick expects a vector")

    def bwd(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accum(a, full)

    return _node(a.data[index], (a,), bwd)


def row(a, index):
    """Row of a matrix as a vector."""
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError("row expects a matrix")

    def bwd(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accum(a, full)

    return _node(a.data[index], (a,), bwd)


def add_n(parts):
    """Sum of same-shape tensors in one node."""
    parts = [_lift(p) for p in parts]

    def bwd(g):
        for p in parts:
            _accum(p, g)

    total = parts[0].data.copy()
    for p in parts[1:]:
        total += p.data
    return _node(total, tuple(parts), bwd)
