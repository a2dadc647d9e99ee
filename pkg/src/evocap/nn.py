"""Shared differentiable building blocks: linear maps, layer norm, dot-product
attention with optional 0/1 key masking, a pre-norm self-attention encoder
block, an LSTM cell, and the two pooling helpers used across the pipeline.

All parameters are float64 leaf tensors; initialization is uniform scaled by
fan-in and fully determined by the generator passed at construction.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, as_tensor, concat, parameter, softmax


class Module:
    """Parameter container with recursive dotted-name collection."""

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                out[key] = val
            elif isinstance(val, Module):
                for k, v in val.parameters().items():
                    out[f"{key}.{k}"] = v
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        for k, v in item.parameters().items():
                            out[f"{key}.{i}.{k}"] = v
        return out

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, rng, in_dim: int, out_dim: int, bias: bool = True):
        self.W = parameter(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.b = parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = as_tensor(x) @ self.W
        if self.b is not None:
            y = y + self.b
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gain + self.bias


def softmax_rows(x) -> Tensor:
    """Row-stochastic softmax of an N x M matrix, stabilized by row-max
    subtraction. NaN input raises."""
    return softmax(as_tensor(x), axis=-1)


def weighted_pool(rows: Tensor, score_proj: Tensor, value_proj: Tensor) -> Tensor:
    """Pool L rows down to M rows: column-softmax attention over the rows.

    ``rows @ score_proj`` (L x M) is normalized over the row axis per column,
    and its transpose mixes ``rows @ value_proj`` (L x d), so every output row
    is a convex combination of projected input rows.
    """
    rows = as_tensor(rows)
    scores = rows @ score_proj
    weights = softmax(scores, axis=0)
    return weights.T @ (rows @ value_proj)


def mean_pool(x: Tensor) -> Tensor:
    """Arithmetic mean over the token (first) axis, keeping a row vector."""
    return as_tensor(x).mean(axis=0, keepdims=True)


class Attention(Module):
    """Scaled dot-product attention between two token sets.

    ``mask`` is a 0/1 matrix (queries x keys); zero entries get exactly zero
    attention weight, so masked keys and values cannot influence the output.
    """

    def __init__(self, rng, q_dim: int, kv_dim: int, out_dim: int,
                 attn_dim: int | None = None, heads: int = 1):
        attn_dim = kv_dim if attn_dim is None else attn_dim
        if attn_dim % heads != 0:
            raise ValueError(f"attention dim {attn_dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = attn_dim // heads
        self.Wq = parameter(uniform_init(rng, (q_dim, attn_dim), q_dim))
        self.bq = parameter(np.zeros(attn_dim))
        self.Wk = parameter(uniform_init(rng, (kv_dim, attn_dim), kv_dim))
        self.bk = parameter(np.zeros(attn_dim))
        self.Wv = parameter(uniform_init(rng, (kv_dim, attn_dim), kv_dim))
        self.bv = parameter(np.zeros(attn_dim))
        self.Wo = parameter(uniform_init(rng, (attn_dim, out_dim), attn_dim))
        self.bo = parameter(np.zeros(out_dim))

    def __call__(self, q_src: Tensor, kv_src: Tensor, mask: np.ndarray | None = None) -> Tensor:
        q_src, kv_src = as_tensor(q_src), as_tensor(kv_src)
        if mask is not None:
            mask = np.asarray(mask)
            if mask.shape != (q_src.shape[0], kv_src.shape[0]):
                raise ValueError(f"mask shape {mask.shape} does not match "
                                 f"{(q_src.shape[0], kv_src.shape[0])}")
            if (mask.sum(axis=1) == 0).any():
                raise ValueError("attention mask leaves a query with no keys")
        q = q_src @ self.Wq + self.bq
        k = kv_src @ self.Wk + self.bk
        v = kv_src @ self.Wv + self.bv
        scale = 1.0 / math.sqrt(self.head_dim)
        ctx_heads = []
        for h in range(self.heads):
            cols = slice(h * self.head_dim, (h + 1) * self.head_dim)
            qh, kh, vh = q[:, cols], k[:, cols], v[:, cols]
            scores = (qh @ kh.T) * scale
            weights = softmax(scores, axis=-1, mask=mask)
            ctx_heads.append(weights @ vh)
        ctx = ctx_heads[0] if self.heads == 1 else concat(ctx_heads, axis=1)
        return ctx @ self.Wo + self.bo


def cross_attention(q_src, kv_src, params: Attention, mask: np.ndarray | None = None) -> Tensor:
    return params(q_src, kv_src, mask=mask)


class SelfAttentionBlock(Module):
    """Pre-norm encoder block: x + Attn(LN(x)) then + FFN(LN(.))."""

    def __init__(self, rng, dim: int, ff_dim: int | None = None, heads: int = 1):
        ff_dim = 4 * dim if ff_dim is None else ff_dim
        self.ln_attn = LayerNorm(dim)
        self.attn = Attention(rng, dim, dim, dim, heads=heads)
        self.ln_ff = LayerNorm(dim)
        self.ff_in = Linear(rng, dim, ff_dim)
        self.ff_out = Linear(rng, ff_dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        normed = self.ln_attn(x)
        x = x + self.attn(normed, normed)
        x = x + self.ff_out(self.ff_in(self.ln_ff(x)).relu())
        return x


def self_attention_block(x, params: SelfAttentionBlock) -> Tensor:
    return params(x)


class LSTMCell(Module):
    """Input/forget/output gated recurrent cell; forget bias starts at 1."""

    def __init__(self, rng, input_dim: int, hidden_dim: int):
        self.hidden_dim = hidden_dim
        self.Wx = parameter(uniform_init(rng, (input_dim, 4 * hidden_dim), input_dim))
        self.Wh = parameter(uniform_init(rng, (hidden_dim, 4 * hidden_dim), hidden_dim))
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim:2 * hidden_dim] = 1.0
        self.b = parameter(bias)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        gates = as_tensor(x) @ self.Wx + as_tensor(h) @ self.Wh + self.b
        H = self.hidden_dim
        i = gates[:, 0:H].sigmoid()
        f = gates[:, H:2 * H].sigmoid()
        o = gates[:, 2 * H:3 * H].sigmoid()
        cand = gates[:, 3 * H:4 * H].tanh()
        c_new = f * c + i * cand
        h_new = o * c_new.tanh()
        return h_new, c_new


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table, n x dim."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (idx // 2) / dim)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table
