"""Network definitions for the neural next-chord predictors.

Single-feature networks take ids of shape (B, L); multi-feature networks take
(B, L, F) with the prediction target drawn from one of the F lanes. All return
logits (B, V) except :class:`GPTNet`, which returns per-position logits
(B, L, V).
"""

from __future__ import annotations

import numpy as np

from chordlab.autodiff import tensor as T
from chordlab.autodiff.nn import (
    LSTM,
    DecoderBlock,
    Embedding,
    EncoderBlock,
    LayerNorm,
    Linear,
    Module,
    uniform_param,
)
from chordlab.corpus import PAD_ID
from chordlab.errors import ShapeMismatch


def _check_ids(X, ndim, L=None, F=None):
    X = np.asarray(X)
    if X.ndim != ndim:
        raise ShapeMismatch(f"expected {ndim}-d token ids, got shape {X.shape}")
    if L is not None and X.shape[1] > L:
        raise ShapeMismatch(f"context length {X.shape[1]} exceeds model maximum {L}")
    if F is not None and X.shape[2] != F:
        raise ShapeMismatch(f"expected {F} features, got {X.shape[2]}")
    return X


class Network(Module):
    """Shared loss: many-to-one cross-entropy on the final prediction."""

    per_position = False

    def loss(self, X, y):
        return T.cross_entropy(self(X), y)


class LSTMNet(Network):
    def __init__(self, rng, vocab_size, embed_dim, hidden_dim, n_layers, dropout, context_length):
        self.context_length = context_length
        self.embed = Embedding(rng, vocab_size, embed_dim)
        self.lstm = LSTM(rng, embed_dim, hidden_dim, n_layers, dropout)
        self.head = Linear(rng, hidden_dim, vocab_size)
        self.dropout = dropout
        self.rng = rng

    def states(self, X):
        X = _check_ids(X, 2, self.context_length)
        e = T.dropout(self.embed(X), self.dropout, self.rng, self.training)
        return self.lstm(e)

    def __call__(self, X):
        H = self.states(X)
        return self.head(T.take(H, (slice(None), -1)))


class LSTMAttentionNet(LSTMNet):
    """Dot-product attention of the final hidden state over all hidden states.

    ``c = sum_i a_i h_i`` with ``a = softmax(h_i . h_L / sqrt(hidden))``;
    the head reads ``[c; h_L]``.
    """

    def __init__(self, rng, vocab_size, embed_dim, hidden_dim, n_layers, dropout, context_length):
        super().__init__(rng, vocab_size, embed_dim, hidden_dim, n_layers, dropout, context_length)
        self.head = Linear(rng, 2 * hidden_dim, vocab_size)
        self.last_attention = None

    def attend(self, H):
        B, L, Hd = H.shape
        last = T.take(H, (slice(None), slice(L - 1, L)))                      # (B, 1, h)
        scores = T.matmul(last, T.transpose(H, (0, 2, 1)))                    # (B, 1, L)
        weights = T.softmax(T.scale(scores, 1.0 / np.sqrt(Hd)), axis=-1)
        self.last_attention = weights.data[:, 0, :]
        context = T.reshape(T.matmul(weights, H), (B, Hd))
        return context, T.reshape(last, (B, Hd))

    def __call__(self, X):
        context, last = self.attend(self.states(X))
        return self.head(T.concat([context, last], axis=-1))


class TransformerNet(Network):
    """Post-norm encoder stack; the final position feeds a linear head."""

    def __init__(self, rng, vocab_size, embed_dim, hidden_dim, n_layers, n_heads, dropout,
                 context_length, positional=True):
        self.context_length = context_length
        self.embed = Embedding(rng, vocab_size, embed_dim)
        self.positional = positional
        self.pos = uniform_param(rng, (context_length, embed_dim), embed_dim)
        self.blocks = [EncoderBlock(rng, embed_dim, n_heads, hidden_dim, dropout) for _ in range(n_layers)]
        self.head = Linear(rng, embed_dim, vocab_size)
        self.dropout = dropout
        self.rng = rng

    def encode_embedded(self, e):
        L = e.shape[1]
        if self.positional:
            e = T.add(e, T.take(self.pos, slice(self.context_length - L, self.context_length)))
        x = T.dropout(e, self.dropout, self.rng, self.training)
        for block in self.blocks:
            x = block(x)
        return x

    def __call__(self, X):
        X = _check_ids(X, 2, self.context_length)
        x = self.encode_embedded(self.embed(X))
        return self.head(T.take(x, (slice(None), -1)))

    @property
    def attention_weights(self):
        return [b.attn.last_weights for b in self.blocks]


class GPTNet(Network):
    """Pre-norm causal decoder; every position predicts its successor."""

    per_position = True

    def __init__(self, rng, vocab_size, embed_dim, hidden_dim, n_layers, n_heads, dropout,
                 context_length):
        self.context_length = context_length
        self.embed = Embedding(rng, vocab_size, embed_dim)
        self.pos = uniform_param(rng, (context_length, embed_dim), embed_dim)
        self.blocks = [DecoderBlock(rng, embed_dim, n_heads, hidden_dim, dropout) for _ in range(n_layers)]
        self.norm = LayerNorm(embed_dim)
        self.head = Linear(rng, embed_dim, vocab_size, bias=False)
        self.dropout = dropout
        self.rng = rng

    def decode(self, e):
        L = e.shape[1]
        # positions are counted from the start of the window
        x = T.add(e, T.take(self.pos, slice(0, L)))
        x = T.dropout(x, self.dropout, self.rng, self.training)
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def __call__(self, X):
        X = _check_ids(X, 2, self.context_length)
        return self.head(self.decode(self.embed(X)))

    def final_logits(self, X):
        return T.take(self(X), (slice(None), -1))

    def loss(self, X, y):
        """Teacher-forced next-token loss over all positions; PAD targets skipped."""
        X = np.asarray(X)
        targets = np.concatenate([X[:, 1:], np.asarray(y).reshape(-1, 1)], axis=1)
        logits = self(X)
        B, L, V = logits.shape
        return T.cross_entropy(T.reshape(logits, (B * L, V)), targets.reshape(-1), ignore_index=PAD_ID)


class MultiLSTMNet(Network):
    """One embedding + LSTM per feature; final states concatenated into the head."""

    def __init__(self, rng, vocab_sizes, target_feature, embed_dim, hidden_dim, n_layers, dropout,
                 context_length):
        self.context_length = context_length
        self.embeds = [Embedding(rng, V, embed_dim) for V in vocab_sizes]
        self.lstms = [LSTM(rng, embed_dim, hidden_dim, n_layers, dropout) for _ in vocab_sizes]
        self.head = Linear(rng, hidden_dim * len(vocab_sizes), vocab_sizes[target_feature])
        self.dropout = dropout
        self.rng = rng

    def feature_states(self, X):
        X = _check_ids(X, 3, self.context_length, len(self.embeds))
        out = []
        for f, (emb, lstm) in enumerate(zip(self.embeds, self.lstms)):
            e = T.dropout(emb(X[:, :, f]), self.dropout, self.rng, self.training)
            out.append(lstm(e))
        return out

    def __call__(self, X):
        finals = [T.take(H, (slice(None), -1)) for H in self.feature_states(X)]
        C = finals[0] if len(finals) == 1 else T.concat(finals, axis=-1)
        return self.head(C)


class MultiLSTMAttentionNet(MultiLSTMNet):
    """Per-feature LSTMs with additive attention normalized jointly over (feature, time).

    ``e[f,t] = w . tanh(h[f,t] W + c_f)`` where ``c_f`` is a learned per-feature
    vector; ``alpha = softmax`` over all F*L scores; the head reads the
    attended context concatenated with every feature's final state.
    """

    def __init__(self, rng, vocab_sizes, target_feature, embed_dim, hidden_dim, n_layers, dropout,
                 context_length, attention_dim=None):
        super().__init__(rng, vocab_sizes, target_feature, embed_dim, hidden_dim, n_layers, dropout,
                         context_length)
        A = attention_dim or hidden_dim
        F = len(vocab_sizes)
        self.att_proj = Linear(rng, hidden_dim, A, bias=False)
        self.att_context = uniform_param(rng, (F, A), A)
        self.att_score = uniform_param(rng, (A, 1), A)
        self.head = Linear(rng, hidden_dim * (F + 1), vocab_sizes[target_feature])
        self.last_attention = None

    def __call__(self, X):
        states = self.feature_states(X)
        B, L, Hd = states[0].shape
        F = len(states)
        scores = []
        for f, H in enumerate(states):
            hidden = T.tanh(T.add(self.att_proj(H), T.take(self.att_context, f)))   # (B, L, A)
            scores.append(T.reshape(T.matmul(hidden, self.att_score), (B, L)))
        flat = scores[0] if F == 1 else T.concat(scores, axis=-1)                  # (B, F*L)
        weights = T.softmax(flat, axis=-1)
        self.last_attention = weights.data.reshape(B, F, L)
        allh = states[0] if F == 1 else T.concat(states, axis=1)                   # (B, F*L, h)
        context = T.reshape(T.matmul(T.reshape(weights, (B, 1, F * L)), allh), (B, Hd))
        finals = [T.take(H, (slice(None), -1)) for H in states]
        return self.head(T.concat([context] + finals, axis=-1))


class MultiTransformerNet(TransformerNet):
    """Per-feature embeddings concatenated on channels, then the encoder stack."""

    def __init__(self, rng, vocab_sizes, target_feature, embed_dim, hidden_dim, n_layers, n_heads,
                 dropout, context_length):
        F = len(vocab_sizes)
        D = embed_dim * F
        self.context_length = context_length
        self.embeds = [Embedding(rng, V, embed_dim) for V in vocab_sizes]
        self.positional = True
        self.pos = uniform_param(rng, (context_length, D), D)
        self.blocks = [EncoderBlock(rng, D, n_heads, hidden_dim, dropout) for _ in range(n_layers)]
        self.head = Linear(rng, D, vocab_sizes[target_feature])
        self.dropout = dropout
        self.rng = rng

    def __call__(self, X):
        X = _check_ids(X, 3, self.context_length, len(self.embeds))
        parts = [emb(X[:, :, f]) for f, emb in enumerate(self.embeds)]
        e = parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)
        x = self.encode_embedded(e)
        return self.head(T.take(x, (slice(None), -1)))


class MultiGPTNet(GPTNet):
    """Concatenated feature embeddings projected into a causal decoder; last state -> head."""

    per_position = False

    def __init__(self, rng, vocab_sizes, target_feature, embed_dim, hidden_dim, n_layers, n_heads,
                 dropout, context_length):
        F = len(vocab_sizes)
        self.context_length = context_length
        self.embeds = [Embedding(rng, V, embed_dim) for V in vocab_sizes]
        self.project = Linear(rng, embed_dim * F, embed_dim)
        self.pos = uniform_param(rng, (context_length, embed_dim), embed_dim)
        self.blocks = [DecoderBlock(rng, embed_dim, n_heads, hidden_dim, dropout) for _ in range(n_layers)]
        self.norm = LayerNorm(embed_dim)
        self.head = Linear(rng, embed_dim, vocab_sizes[target_feature])
        self.dropout = dropout
        self.rng = rng

    def hidden(self, X):
        X = _check_ids(X, 3, self.context_length, len(self.embeds))
        parts = [emb(X[:, :, f]) for f, emb in enumerate(self.embeds)]
        e = parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)
        return self.decode(self.project(e))

    def __call__(self, X):
        return self.head(T.take(self.hidden(X), (slice(None), -1)))

    def final_logits(self, X):
        return self(X)

    def loss(self, X, y):
        return T.cross_entropy(self(X), y)

    def position_logits(self, X):
        return self.head(self.hidden(X))
