"""Reverse-mode autodiff over numpy float64 arrays.

A Tensor wraps an ndarray and records a closure-based tape; backward()
walks the graph in reverse topological order.  Everything is double
precision and single threaded: a forward/backward pass is a pure function
of its inputs, so results are reproducible bit for bit.
"""
from __future__ import annotations

import contextlib

import numpy as np

from .. import _kernels

_GRAD_ENABLED = True

# When True, backward() verifies every incoming gradient is finite and
# reports the offending node.  Costs a full pass per node; off by default.
NAN_CHECKS = False


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


def _unbroadcast(g, shape):
    """Reduce a gradient back to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    # -- graph construction helpers -------------------------------------

    @staticmethod
    def _make(data, parents, op, backward):
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, _parents=parents if track else (), op=op)
        if track:
            out._backward = backward
        return out

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g, other.data.shape))

        return Tensor._make(out_data, (self, other), "add", backward)

    __radd__ = __add__

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._make(out_data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other.pow(-1.0)
        return self * (1.0 / other)

    def pow(self, exponent):
        out_data = self.data ** exponent

        def backward(g):
            if self.requires_grad:
                self._accum(g * exponent * self.data ** (exponent - 1.0))

        return Tensor._make(out_data, (self,), "pow", backward)

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                ga = g @ other.data.swapaxes(-1, -2)
                self._accum(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = self.data.swapaxes(-1, -2) @ g
                other._accum(_unbroadcast(gb, other.data.shape))

        return Tensor._make(out_data, (self, other), "matmul", backward)

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def backward(g):
            if self.requires_grad:
                self._accum(g.reshape(src_shape))

        return Tensor._make(out_data, (self,), "reshape", backward)

    def swapaxes(self, a, b):
        out_data = self.data.swapaxes(a, b)

        def backward(g):
            if self.requires_grad:
                self._accum(g.swapaxes(a, b))

        return Tensor._make(out_data, (self,), "swapaxes", backward)

    def broadcast_to(self, shape):
        src_shape = self.data.shape
        out_data = np.broadcast_to(self.data, shape)

        def backward(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, src_shape))

        return Tensor._make(out_data, (self,), "broadcast", backward)

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[key] = g
                self._accum(full)

        return Tensor._make(out_data, (self,), "slice", backward)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        src_shape = self.data.shape

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accum(np.broadcast_to(g, src_shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, src_shape).copy())

        return Tensor._make(out_data, (self,), "sum", backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise nonlinearities -----------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g * out_data)

        return Tensor._make(out_data, (self,), "exp", backward)

    def log(self):
        out_data = np.log(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g / self.data)

        return Tensor._make(out_data, (self,), "log", backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g * (1.0 - out_data * out_data))

        return Tensor._make(out_data, (self,), "tanh", backward)

    def abs(self):
        out_data = np.abs(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g * np.sign(self.data))

        return Tensor._make(out_data, (self,), "abs", backward)

    def relu(self):
        out_data = np.maximum(self.data, 0.0)

        def backward(g):
            if self.requires_grad:
                self._accum(g * (self.data > 0.0))

        return Tensor._make(out_data, (self,), "relu", backward)

    def gelu(self):
        # tanh approximation; derivative computed from saved intermediates
        c = 0.7978845608028654  # sqrt(2/pi)
        x = self.data
        inner = c * (x + 0.044715 * x ** 3)
        t = np.tanh(inner)
        out_data = 0.5 * x * (1.0 + t)

        def backward(g):
            if self.requires_grad:
                dinner = c * (1.0 + 3 * 0.044715 * x ** 2)
                d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
                self._accum(g * d)

        return Tensor._make(out_data, (self,), "gelu", backward)

    def softplus(self):
        x = self.data
        out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

        def backward(g):
            if self.requires_grad:
                # stable sigmoid
                sig = np.empty_like(x)
                pos = x >= 0
                sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
                ex = np.exp(x[~pos])
                sig[~pos] = ex / (1.0 + ex)
                self._accum(g * sig)

        return Tensor._make(out_data, (self,), "softplus", backward)

    # -- backward ------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise FloatingPointError("backward() called on a non-finite loss")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            if NAN_CHECKS and not np.isfinite(node.grad).all():
                raise FloatingPointError(f"non-finite gradient at node op={node.op!r}")
            node._backward(node.grad)
            if node._parents:
                # free intermediate grads; leaves keep theirs
                node.grad = None


# -- free functions ------------------------------------------------------


def concat(tensors, axis):
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return Tensor._make(out_data, tuple(tensors), "concat", backward)


def embedding(table, ids):
    """Row lookup: table (V, d), ids int array -> (..., d)."""
    ids = np.asarray(ids)
    out_data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids.ravel(), g.reshape(-1, table.data.shape[-1]))
            table._accum(full)

    return Tensor._make(out_data, (table,), "embedding", backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    dim = x.data.shape[-1]
    flat = np.ascontiguousarray(x.data.reshape(-1, dim))
    y, xhat, inv_std = _kernels.layer_norm_fwd(flat, gamma.data, beta.data, eps)

    def backward(g):
        gf = np.ascontiguousarray(g.reshape(-1, dim))
        dx, dgamma, dbeta = _kernels.layer_norm_bwd(gf, xhat, inv_std, gamma.data)
        if x.requires_grad:
            x._accum(np.asarray(dx).reshape(x.data.shape))
        if gamma.requires_grad:
            gamma._accum(np.asarray(dgamma))
        if beta.requires_grad:
            beta._accum(np.asarray(dbeta))

    return Tensor._make(y.reshape(x.data.shape), (x, gamma, beta), "layer_norm", backward)


def masked_softmax(scores, allow):
    """Softmax over the last axis restricted to allowed keys.

    allow: boolean ndarray broadcastable to scores.shape.  Disallowed
    entries are excluded from the normalization (their probability is an
    exact 0.0), so outputs are bitwise independent of masked inputs.
    """
    shape = scores.data.shape
    cols = shape[-1]
    allow_full = np.broadcast_to(allow, shape)
    allow_flat = np.ascontiguousarray(allow_full.reshape(-1, cols).astype(np.uint8))
    flat = np.ascontiguousarray(scores.data.reshape(-1, cols))
    probs = np.asarray(_kernels.masked_softmax_fwd(flat, allow_flat))

    def backward(g):
        if scores.requires_grad:
            gf = np.ascontiguousarray(g.reshape(-1, cols))
            ds = _kernels.masked_softmax_bwd(probs, gf, allow_flat)
            scores._accum(np.asarray(ds).reshape(shape))

    return Tensor._make(probs.reshape(shape), (scores,), "masked_softmax", backward)


def cross_entropy(logits, targets, reduction="mean"):
    """Stable token cross-entropy: logits (N, V), targets (N,) int."""
    targets = np.asarray(targets)
    x = logits.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    z = e.sum(axis=-1, keepdims=True)
    logp = x - m - np.log(z)
    n = x.shape[0]
    picked = logp[np.arange(n), targets]
    if reduction == "mean":
        loss = -picked.mean()
        scale = 1.0 / n
    elif reduction == "sum":
        loss = -picked.sum()
        scale = 1.0
    else:
        raise ValueError(f"unknown reduction {reduction!r}")

    def backward(g):
        if logits.requires_grad:
            soft = e / z
            soft[np.arange(n), targets] -= 1.0
            logits._accum(g * scale * soft)

    return Tensor._make(np.asarray(loss), (logits,), "cross_entropy", backward)
