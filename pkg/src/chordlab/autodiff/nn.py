"""Layers built on the tensor ops.

Every weight and bias is drawn from ``uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))``;
layer-norm gains start at one and offsets at zero.
"""

from __future__ import annotations

import numpy as np

from chordlab.autodiff import tensor as T
from chordlab.autodiff.tensor import Tensor, get_default_dtype


def uniform_param(rng, shape, fan_in, name=None):
    bound = 1.0 / np.sqrt(fan_in)
    data = rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Container that discovers parameters and sub-modules by attribute order."""

    training = True

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def n_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        if set(params) != set(state):
            missing = sorted(set(params) ^ set(state))
            raise KeyError(f"parameter names differ: {missing}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.data.dtype, copy=True)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    def __init__(self, rng, n_in, n_out, bias=True):
        self.weight = uniform_param(rng, (n_in, n_out), n_in)
        self.bias = uniform_param(rng, (n_out,), n_in) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class Embedding(Module):
    def __init__(self, rng, n_tokens, dim):
        self.weight = uniform_param(rng, (n_tokens, dim), dim)

    def __call__(self, ids):
        return T.embedding(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, dim):
        dt = get_default_dtype()
        self.gain = Tensor(np.ones(dim, dtype=dt), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dt), requires_grad=True)

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias)


class LSTMLayer(Module):
    """One LSTM layer; gate pre-activations are ``W [h_{t-1}, x_t] + b``.

    The concatenated weight is held as an input block and a recurrent block
    so the input projection can be computed for all steps at once.
    """

    def __init__(self, rng, n_in, hidden):
        fan_in = n_in + hidden
        self.hidden = hidden
        self.w_input = uniform_param(rng, (n_in, 4 * hidden), fan_in)
        self.w_hidden = uniform_param(rng, (hidden, 4 * hidden), fan_in)
        self.bias = uniform_param(rng, (4 * hidden,), fan_in)

    def __call__(self, x):
        """``x`` (B, L, n_in) -> hidden states (B, L, hidden)."""
        proj = T.add(T.matmul(x, self.w_input), self.bias)
        return T.lstm_recurrence(proj, self.w_hidden)


class LSTM(Module):
    def __init__(self, rng, n_in, hidden, n_layers=1, dropout=0.0):
        self.layers = [LSTMLayer(rng, n_in if k == 0 else hidden, hidden) for k in range(n_layers)]
        self.dropout = dropout
        self.rng = rng

    def __call__(self, x):
        """Returns the top layer's hidden states stacked as (B, L, hidden)."""
        for k, layer in enumerate(self.layers):
            if k:
                x = T.dropout(x, self.dropout, self.rng, self.training)
            x = layer(x)
        return x


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention; ``causal`` masks future positions."""

    def __init__(self, rng, dim, n_heads, causal=False):
        if dim % n_heads:
            raise ValueError(f"model dim {dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.causal = causal
        self.query = Linear(rng, dim, dim)
        self.key = Linear(rng, dim, dim)
        self.value = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)
        self.last_weights = None

    def _split(self, x, B, L, dk):
        return T.transpose(T.reshape(x, (B, L, self.n_heads, dk)), (0, 2, 1, 3))

    def __call__(self, x):
        B, L, D = x.shape
        dk = D // self.n_heads
        q = self._split(self.query(x), B, L, dk)
        k = self._split(self.key(x), B, L, dk)
        v = self._split(self.value(x), B, L, dk)
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dk))
        if self.causal:
            scores = T.mask_fill(scores, np.triu(np.ones((L, L), dtype=bool), k=1), -np.inf)
        weights = T.softmax(scores, axis=-1)
        self.last_weights = weights.data
        ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (B, L, D))
        return self.out(ctx)


class FeedForward(Module):
    def __init__(self, rng, dim, hidden):
        self.inner = Linear(rng, dim, hidden)
        self.outer = Linear(rng, hidden, dim)

    def __call__(self, x):
        return self.outer(T.relu(self.inner(x)))


class EncoderBlock(Module):
    """Post-norm block: ``x = LN(x + Attn(x)); x = LN(x + FFN(x))``."""

    def __init__(self, rng, dim, n_heads, hidden, dropout):
        self.attn = MultiHeadAttention(rng, dim, n_heads)
        self.norm1 = LayerNorm(dim)
        self.ffn = FeedForward(rng, dim, hidden)
        self.norm2 = LayerNorm(dim)
        self.dropout = dropout
        self.rng = rng

    def __call__(self, x):
        a = T.dropout(self.attn(x), self.dropout, self.rng, self.training)
        x = self.norm1(T.add(x, a))
        f = T.dropout(self.ffn(x), self.dropout, self.rng, self.training)
        return self.norm2(T.add(x, f))


class DecoderBlock(Module):
    """Pre-norm causal block: ``x = x + Attn(LN(x)); x = x + FFN(LN(x))``."""

    def __init__(self, rng, dim, n_heads, hidden, dropout):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(rng, dim, n_heads, causal=True)
        self.norm2 = LayerNorm(dim)
        self.ffn = FeedForward(rng, dim, hidden)
        self.dropout = dropout
        self.rng = rng

    def __call__(self, x):
        x = T.add(x, T.dropout(self.attn(self.norm1(x)), self.dropout, self.rng, self.training))
        return T.add(x, T.dropout(self.ffn(self.norm2(x)), self.dropout, self.rng, self.training))
