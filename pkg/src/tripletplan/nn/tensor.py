"""Reverse-mode autodiff on dense float64 numpy arrays.

Small tape design: every differentiable op returns a new Tensor whose
closure knows how to push gradients into its parents. Graphs are built
per forward pass and discarded after backward(); parameters are long-lived
Tensors with requires_grad=True. Single-threaded per graph.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape construction inside the block (pure inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class ShapeMismatch(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    # --- bookkeeping -----------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate_grad(self, g: np.ndarray):
        # First touch takes the array by reference: backward closures hand
        # over freshly allocated arrays (the one shared-object case lives in
        # add(), which copies). Later touches accumulate in place.
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            if not self.grad.flags.writeable:
                self.grad = self.grad.copy()
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without explicit gradient requires a scalar")
            grad = np.ones_like(self.data)
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
        self.accumulate_grad(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # --- operator sugar ---------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow_(other, -1.0))
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# --- arithmetic -----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad and b.requires_grad and a.data.shape == b.data.shape:
            # same array would otherwise be handed to both parents
            a.accumulate_grad(g)
            b.accumulate_grad(g.copy() if b.grad is None else g)
            return
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return make_op(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return make_op(data, (a, b), backward)


def pow_(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    e = float(exponent)
    data = a.data ** e

    def backward(g):
        a.accumulate_grad(g * e * a.data ** (e - 1.0))

    return make_op(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >=2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    return make_op(data, (a, b), backward)


# --- elementwise nonlinearities --------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a.accumulate_grad(g * data)

    return make_op(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a.accumulate_grad(g / a.data)

    return make_op(data, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - data * data))

    return make_op(data, (a,), backward)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = _sigmoid_np(a.data)

    def backward(g):
        a.accumulate_grad(g * data * (1.0 - data))

    return make_op(data, (a,), backward)


def logsigmoid(a) -> Tensor:
    """Numerically stable log(sigmoid(x)) = -softplus(-x)."""
    a = as_tensor(a)
    x = a.data
    data = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        a.accumulate_grad(g * _sigmoid_np(-x))

    return make_op(data, (a,), backward)


def minimum(a, b) -> Tensor:
    """Elementwise min; gradient follows the smaller operand (ties -> a)."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(np.where(take_a, g, 0.0), a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(np.where(take_a, 0.0, g), b.data.shape))

    return make_op(data, (a, b), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is zero where the clamp is active."""
    a = as_tensor(a)
    data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a.accumulate_grad(np.where(inside, g, 0.0))

    return make_op(data, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a.accumulate_grad(g * (a.data > 0.0))

    return make_op(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    """Stable softmax; -inf entries (from causal masks) get exactly 0 weight."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a.accumulate_grad(data * (g - dot))

    return make_op(data, (a,), backward)


# --- structural ops ---------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return make_op(data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate_grad(np.transpose(g, inverse))

    return make_op(data, (a,), backward)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    data = a.data[idx]
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (slice, int)) or p is Ellipsis or p is None for p in parts)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g  # basic indexing never repeats elements
        else:
            np.add.at(full, idx, g)
        a.accumulate_grad(full)

    return make_op(data, (a,), backward)


def flip(a, axis: int) -> Tensor:
    a = as_tensor(a)
    data = np.flip(a.data, axis=axis).copy()

    def backward(g):
        a.accumulate_grad(np.flip(g, axis=axis))

    return make_op(data, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(sl)])

    return make_op(data, tuple(tensors), backward)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g if (axis is None or keepdims) else np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.data.shape).copy())

    return make_op(data, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where `mask` is True by `value` (no gradient there)."""
    a = as_tensor(a)
    data = np.where(mask, value, a.data)

    def backward(g):
        a.accumulate_grad(np.where(mask, 0.0, g))

    return make_op(data, (a,), backward)


def linear(x, w, b) -> Tensor:
    """Fused affine map over the last axis: x @ w + b."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeMismatch(f"linear: input {x.data.shape} vs weight {w.data.shape}")
    data = x.data @ w.data + b.data

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g @ w.data.T)
        if w.requires_grad:
            gm = g.reshape(-1, g.shape[-1])
            xm = x.data.reshape(-1, x.data.shape[-1])
            w.accumulate_grad(xm.T @ gm)
        if b.requires_grad:
            b.accumulate_grad(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return make_op(data, (x, w, b), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Fused normalization over the last axis with affine parameters."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).reshape(-1, g.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g.reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(term * inv)

    return make_op(data, (x, gamma, beta), backward)


def gather_rows(table, indices) -> Tensor:
    """Embedding lookup: rows of `table` at integer `indices` (any shape)."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    data = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.ravel(), g.reshape(-1, table.data.shape[1]))
        table.accumulate_grad(full)

    return make_op(data, (table,), backward)
