"""Dense float tensors with reverse-mode automatic differentiation.

Graphs are built implicitly: an op returns a new Tensor carrying a closure
that routes incoming gradients to the op's inputs. Calling ``backward()``
on a scalar walks the graph once in reverse topological order and fills
``.grad`` on every reachable tensor that requires gradients.

float32 is the working precision everywhere. float64 tensors are supported
only so gradients can be verified against finite differences; pass
``dtype=np.float64`` explicitly to enter that mode.

Graphs are single-threaded. Tensors that do not require gradients are
never mutated by the ops here and are safe to read concurrently.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import _kernels as kernels
from .errors import ConfigError, DegenerateMaskError, OutOfRangeError, ShapeError

DEFAULT_DTYPE = np.float32

_GRAD_ENABLED = True


def grad_enabled():
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Suspend graph construction inside the block (inference path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense n-d float array plus an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is None:
            dtype = DEFAULT_DTYPE
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(input) into .grad over the whole graph.

        Gradient accumulation is additive: a tensor used twice receives the
        sum of both paths. Grads are never cleared here; that is the
        optimizer's explicit job.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar over the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{flag})"


def _toposort(root):
    order = []
    visited = {id(root)}
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                visited.add(id(p))
                stack.append((p, False))
    return order


def _make_op(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._backward = backward if track else None
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _coerce(value, like):
    if isinstance(value, Tensor):
        if value.data.dtype != like.data.dtype:
            raise ShapeError(
                f"mixed tensor dtypes: {like.data.dtype} and {value.data.dtype}"
            )
        return value
    return Tensor(value, dtype=like.data.dtype)


def _unbroadcast(g, shape):
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    b = _coerce(b, a)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make_op(data, (a, b), backward)


def sub(a, b):
    b = _coerce(b, a)
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, -_unbroadcast(g, b.data.shape))

    return _make_op(data, (a, b), backward)


def mul(a, b):
    b = _coerce(b, a)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make_op(data, (a, b), backward)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul expects [n,k] @ [k,m]; got {tuple(a.data.shape)} "
            f"and {tuple(b.data.shape)}"
        )
    data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make_op(data, (a, b), backward)


def reshape(a, shape):
    data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make_op(data, (a,), backward)


def concat(tensors, axis):
    """Join tensors along ``axis``; gradients split back to each input."""
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    if len(tensors) == 1:
        return tensors[0]
    base = tensors[0].data.shape
    for t in tensors[1:]:
        other = t.data.shape
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis % len(base)
        ):
            raise ShapeError(
                f"concat shapes differ off axis {axis}: {tuple(base)} vs {tuple(other)}"
            )
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make_op(data, tuple(tensors), backward)


def sigmoid(x):
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accum(x, g * out * (1.0 - out))

    return _make_op(out, (x,), backward)


def tanh(x):
    out = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - out * out))

    return _make_op(out, (x,), backward)


def sum_all(x):
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _make_op(data, (x,), backward)


def masked_softmax(scores, mask):
    """Softmax over the true positions of ``mask``; false positions are
    exactly zero. Stabilized by max subtraction."""
    mask = np.asarray(mask, dtype=bool)
    if scores.data.ndim != 1 or mask.shape != scores.data.shape:
        raise ShapeError(
            f"masked_softmax expects matching 1-d shapes; got {tuple(scores.data.shape)} "
            f"and {tuple(mask.shape)}"
        )
    if not mask.any():
        raise DegenerateMaskError("softmax mask has no active positions")
    s = scores.data
    shift = s[mask].max()
    e = np.zeros_like(s)
    e[mask] = np.exp(s[mask] - shift)
    y = e / e.sum()

    def backward(g):
        dot = (g * y).sum()
        _accum(scores, y * (g - dot))

    return _make_op(y, (scores,), backward)


def conv1d(x, kernel, bias):
    """Same-padded 1-D convolution over the time axis.

    x: [L, C_in] or [N, L, C_in]; kernel: [K, C_in, C_out] with K odd;
    bias: [C_out]. Output length equals input length.
    """
    if kernel.data.ndim != 3:
        raise ShapeError(f"conv1d kernel must be [K, C_in, C_out]; got {tuple(kernel.data.shape)}")
    k, cin, cout = kernel.data.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel width must be odd, got {k}")
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[2] != cin:
        raise ShapeError(
            f"conv1d input {tuple(x.data.shape)} does not match kernel {tuple(kernel.data.shape)}"
        )
    if bias.data.shape != (cout,):
        raise ShapeError(f"conv1d bias must be [{cout}]; got {tuple(bias.data.shape)}")
    y = kernels.conv1d_fwd(xd, kernel.data, bias.data)
    if squeeze:
        y = y[0]

    def backward(g):
        gy = g[None] if squeeze else g
        gx, gw, gb = kernels.conv1d_bwd(xd, kernel.data, gy)
        _accum(x, gx[0] if squeeze else gx)
        _accum(kernel, gw)
        _accum(bias, gb)

    return _make_op(np.ascontiguousarray(y), (x, kernel, bias), backward)


def gather_rows(table, ids, freeze_rows=()):
    """Row gather with scatter-add gradient. ``freeze_rows`` never receive
    gradient (padding rows stay fixed)."""
    ids = np.asarray(ids, dtype=np.int64)
    v = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise OutOfRangeError(f"row id out of range for table of {v} rows")
    data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        for r in freeze_rows:
            gt[r] = 0.0
        _accum(table, gt)

    return _make_op(data, (table,), backward)


def global_max_pool(x, mask=None):
    """Max over the second-to-last axis: [.., L, F] -> [.., F].

    ``mask`` (shape [.., L]) restricts the pool to true positions; each
    pooled row must keep at least one active position.
    """
    xd = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != xd.shape[:-1]:
            raise ShapeError(
                f"pool mask {tuple(mask.shape)} does not match input {tuple(xd.shape)}"
            )
        if not mask.any(axis=-1).all():
            raise DegenerateMaskError("max pool has a row with no active positions")
        lowest = np.finfo(xd.dtype).min
        scored = np.where(mask[..., None], xd, lowest)
    else:
        if xd.shape[-2] < 1:
            raise DegenerateMaskError("max pool over an empty axis")
        scored = xd
    idx = scored.argmax(axis=-2)
    data = np.take_along_axis(xd, idx[..., None, :], axis=-2)[..., 0, :]

    def backward(g):
        gx = np.zeros_like(xd)
        np.put_along_axis(gx, idx[..., None, :], g[..., None, :], axis=-2)
        _accum(x, gx)

    return _make_op(np.ascontiguousarray(data), (x,), backward)
