"""Layer set: linear, embedding, layer norm, (bi)LSTM, causal attention block.

Initialization is scaled uniform (fan-in) throughout, simple uniform for
recurrent weights. Constructors take a numpy Generator so parameter draws
ride the caller's seeded stream.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels as kernels
from .tensor import (
    Tensor,
    concat,
    flip,
    gather_rows,
    layer_norm,
    linear,
    make_op,
    masked_fill,
    matmul,
    softmax,
    tanh,
)


def parameter(shape, rng=None, scale: float = 0.0, name: str = "") -> Tensor:
    """Fresh trainable tensor; uniform(-scale, scale) or zeros when scale=0."""
    if scale > 0.0:
        data = rng.uniform(-scale, scale, size=shape)
    else:
        data = np.zeros(shape)
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Base with automatic `name.path.param` discovery for checkpoints."""

    def named_params(self, prefix: str = "") -> dict:
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + key] = value
            elif isinstance(value, Module):
                out.update(value.named_params(f"{prefix}{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_params(f"{prefix}{key}.{i}."))
        return out

    def zero_grad(self):
        for p in self.named_params().values():
            p.grad = None

    def param_count(self) -> int:
        return sum(p.data.size for p in self.named_params().values())

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self.named_params().items()}

    def load_state_dict(self, state: dict, strict: bool = True):
        """Copy arrays into matching parameter names (forward-compatible)."""
        params = self.named_params()
        missing = [k for k in params if k not in state]
        if strict and missing:
            raise KeyError(f"state dict missing parameters: {missing}")
        for k, p in params.items():
            if k not in state:
                continue
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: checkpoint {arr.shape} vs model {p.data.shape}")
            p.data = np.ascontiguousarray(arr)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng=None):
        scale = 1.0 / math.sqrt(in_dim)
        self.w = parameter((in_dim, out_dim), rng, scale, name="w")
        self.b = parameter((out_dim,), name="b")

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng=None):
        scale = 1.0 / math.sqrt(dim)
        self.table = parameter((vocab_size, dim), rng, scale, name="table")

    def forward(self, indices) -> Tensor:
        return gather_rows(self.table, indices)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = parameter((dim,), name="gamma")
        self.gamma.data[:] = 1.0
        self.beta = parameter((dim,), name="beta")
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


def lstm_seq(pre_x: Tensor, w_hh: Tensor) -> Tensor:
    """Fused LSTM scan over (B, T, 4H) preactivations; kernel-backed BPTT."""
    pre = np.ascontiguousarray(pre_x.data)
    h_seq, c_seq, gates = kernels.lstm_forward(pre, w_hh.data)

    def backward(g):
        d_pre, d_w_hh = kernels.lstm_backward(
            np.ascontiguousarray(g), h_seq, c_seq, gates, w_hh.data
        )
        if pre_x.requires_grad:
            pre_x.accumulate_grad(d_pre)
        if w_hh.requires_grad:
            w_hh.accumulate_grad(d_w_hh)

    return make_op(h_seq, (pre_x, w_hh), backward)


class LSTM(Module):
    """Single-direction LSTM, zero initial state, returns all hidden states."""

    def __init__(self, in_dim: int, hidden: int, rng=None):
        scale = 1.0 / math.sqrt(hidden)
        self.w_ih = parameter((in_dim, 4 * hidden), rng, scale, name="w_ih")
        self.w_hh = parameter((hidden, 4 * hidden), rng, scale, name="w_hh")
        self.b = parameter((4 * hidden,), name="b")
        self.hidden = hidden

    def forward(self, x: Tensor) -> Tensor:
        B, T, E = x.shape
        pre = matmul(x.reshape(B * T, E), self.w_ih) + self.b
        return lstm_seq(pre.reshape(B, T, 4 * self.hidden), self.w_hh)


class BiLSTM(Module):
    """Forward and backward LSTM, outputs concatenated per position (B,T,2H)."""

    def __init__(self, in_dim: int, hidden: int, rng=None):
        self.fwd = LSTM(in_dim, hidden, rng)
        self.bwd = LSTM(in_dim, hidden, rng)
        self.hidden = hidden

    def forward(self, x: Tensor) -> Tensor:
        hf = self.fwd(x)
        hb = flip(self.bwd(flip(x, axis=1)), axis=1)
        return concat([hf, hb], axis=-1)


class CausalSelfAttentionBlock(Module):
    """Pre-norm decoder block: masked self-attention + tanh MLP, residual."""

    def __init__(self, dim: int, n_heads: int, rng=None, mlp_ratio: int = 4):
        if dim % n_heads:
            raise ValueError(f"dim {dim} not divisible by {n_heads} heads")
        self.ln1 = LayerNorm(dim)
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.ln2 = LayerNorm(dim)
        self.fc1 = Linear(dim, mlp_ratio * dim, rng)
        self.fc2 = Linear(mlp_ratio * dim, dim, rng)
        self.n_heads = n_heads
        self.dim = dim

    def forward(self, x: Tensor) -> Tensor:
        B, T, D = x.shape
        h = self.n_heads
        dh = D // h
        pre = self.ln1(x)
        q = self.wq(pre).reshape(B, T, h, dh).transpose((0, 2, 1, 3))
        k = self.wk(pre).reshape(B, T, h, dh).transpose((0, 2, 1, 3))
        v = self.wv(pre).reshape(B, T, h, dh).transpose((0, 2, 1, 3))
        att = matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
        future = np.triu(np.ones((T, T), dtype=bool), k=1)[None, None, :, :]
        att = softmax(masked_fill(att, future, -np.inf), axis=-1)
        y = matmul(att, v).transpose((0, 2, 1, 3)).reshape(B, T, D)
        x = x + self.proj(y)
        return x + self.fc2(tanh(self.fc1(self.ln2(x))))
