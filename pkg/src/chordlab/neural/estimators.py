"""Scikit-learn style wrappers around the neural networks.

Each estimator follows the ``fit`` / ``predict_proba`` / ``predict`` / ``score``
protocol and inherits ``get_params`` / ``set_params`` from
:class:`sklearn.base.BaseEstimator`, so it can be cloned and searched like any
other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from chordlab._rng import make_rng
from chordlab.corpus import DEFAULT_CONTEXT_LENGTH
from chordlab.neural import networks as nets
from chordlab.train.loop import TrainConfig, train_model
from chordlab.validation import check_contexts, check_targets, infer_vocab_size


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class NeuralPredictor(BaseEstimator):
    kind = None
    multi_feature = False

    def _config(self):
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
                           patience=self.patience, seed=self.seed, grad_clip=self.grad_clip)

    def _check_X(self, X):
        return check_contexts(X, ndim=3 if self.multi_feature else 2)

    def _vocab(self, X, y):
        if self.multi_feature:
            if self.vocab_sizes is not None:
                return tuple(int(v) for v in self.vocab_sizes)
            sizes = [infer_vocab_size(X[:, :, f]) for f in range(X.shape[2])]
            t = self.target_feature
            sizes[t] = max(sizes[t], infer_vocab_size(y))
            return tuple(sizes)
        return int(self.vocab_size) if self.vocab_size is not None else infer_vocab_size(X, y)

    def init_network(self, vocab):
        """Build a freshly initialized network (used by ``fit``; handy in tests)."""
        self.n_tokens_ = vocab[self.target_feature] if self.multi_feature else vocab
        self.vocab_ = vocab
        self.network_ = self._build(make_rng(self.seed, 0x1E7), vocab)
        self.network_.eval()
        return self

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on contexts ``X`` and next-token ids ``y``.

        Optional validation windows enable early stopping.
        """
        X = self._check_X(X)
        y = check_targets(y, len(X))
        if X_val is not None:
            X_val = self._check_X(X_val)
            y_val = check_targets(y_val, len(X_val)) if len(X_val) else np.zeros(0, dtype=np.int64)
        self.init_network(self._vocab(X, y))
        self.result_ = train_model(self.network_, X, y, X_val, y_val, self._config())
        self.loss_curve_ = list(self.result_.train_losses)
        self.validation_curve_ = list(self.result_.val_losses)
        return self

    def decision_function(self, X, batch_size=512):
        """Final-position logits, shape (n, V)."""
        check_is_fitted(self, "network_")
        X = self._check_X(X)
        net = self.network_
        net.eval()
        out = []
        for start in range(0, len(X), batch_size):
            xb = X[start:start + batch_size]
            logits = net.final_logits(xb) if hasattr(net, "final_logits") else net(xb)
            out.append(logits.data.astype(np.float64))
        if not out:
            return np.zeros((0, self.n_tokens_))
        return np.concatenate(out)

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def set_dtype(self, dtype):
        check_is_fitted(self, "network_")
        self.network_.astype(dtype)
        return self


class _SingleLSTMBase(NeuralPredictor):
    def __init__(self, embed_dim=64, hidden_dim=128, n_layers=2, dropout=0.1,
                 context_length=DEFAULT_CONTEXT_LENGTH, lr=1e-3, batch_size=32, max_epochs=100,
                 patience=10, grad_clip=1.0, seed=42, vocab_size=None):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.dropout = dropout
        self.context_length = context_length
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.grad_clip = grad_clip
        self.seed = seed
        self.vocab_size = vocab_size


class LSTMPredictor(_SingleLSTMBase):
    """Embedding -> stacked LSTM -> final hidden state -> linear head."""

    kind = "lstm"

    def _build(self, rng, V):
        return nets.LSTMNet(rng, V, self.embed_dim, self.hidden_dim, self.n_layers, self.dropout,
                            self.context_length)


class LSTMAttentionPredictor(_SingleLSTMBase):
    """LSTM with dot-product attention over its hidden states."""

    kind = "lstm-attn"

    def _build(self, rng, V):
        return nets.LSTMAttentionNet(rng, V, self.embed_dim, self.hidden_dim, self.n_layers,
                                     self.dropout, self.context_length)

    def attention_weights(self, X):
        """Attention weights (n, L) of the final hidden state over all positions."""
        self.decision_function(X, batch_size=len(X) or 1)
        return self.network_.last_attention.astype(np.float64)


class _SingleTransformerBase(NeuralPredictor):
    def __init__(self, embed_dim=64, hidden_dim=128, n_layers=2, n_heads=4, dropout=0.1,
                 context_length=DEFAULT_CONTEXT_LENGTH, lr=1e-3, batch_size=32, max_epochs=100,
                 patience=10, grad_clip=1.0, seed=42, vocab_size=None):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.dropout = dropout
        self.context_length = context_length
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.grad_clip = grad_clip
        self.seed = seed
        self.vocab_size = vocab_size


class TransformerPredictor(_SingleTransformerBase):
    """Encoder-only transformer with learned positions reading the last position."""

    kind = "transformer"

    def __init__(self, embed_dim=64, hidden_dim=128, n_layers=2, n_heads=4, dropout=0.1,
                 context_length=DEFAULT_CONTEXT_LENGTH, lr=1e-3, batch_size=32, max_epochs=100,
                 patience=10, grad_clip=1.0, seed=42, vocab_size=None, positional=True):
        super().__init__(embed_dim, hidden_dim, n_layers, n_heads, dropout, context_length, lr,
                         batch_size, max_epochs, patience, grad_clip, seed, vocab_size)
        self.positional = positional

    def _build(self, rng, V):
        return nets.TransformerNet(rng, V, self.embed_dim, self.hidden_dim, self.n_layers,
                                   self.n_heads, self.dropout, self.context_length, self.positional)


class GPTPredictor(_SingleTransformerBase):
    """Causal decoder trained on every position's next token."""

    kind = "gpt"

    def _build(self, rng, V):
        return nets.GPTNet(rng, V, self.embed_dim, self.hidden_dim, self.n_layers, self.n_heads,
                           self.dropout, self.context_length)

    def position_logits(self, X):
        """Per-position next-token logits, shape (n, L, V)."""
        check_is_fitted(self, "network_")
        X = self._check_X(X)
        self.network_.eval()
        return self.network_(X).data.astype(np.float64)

    def predict_proba_positions(self, X):
        return _softmax(self.position_logits(X))


class _MultiBase(NeuralPredictor):
    multi_feature = True


class _MultiLSTMBase(_MultiBase):
    def __init__(self, embed_dim=64, hidden_dim=128, n_layers=2, dropout=0.1,
                 context_length=DEFAULT_CONTEXT_LENGTH, lr=1e-3, batch_size=32, max_epochs=100,
                 patience=10, grad_clip=1.0, seed=42, vocab_sizes=None, target_feature=0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.dropout = dropout
        self.context_length = context_length
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.grad_clip = grad_clip
        self.seed = seed
        self.vocab_sizes = vocab_sizes
        self.target_feature = target_feature


class MultiLSTMPredictor(_MultiLSTMBase):
    """One LSTM per feature; concatenated final states feed the head."""

    kind = "multi-lstm"

    def _build(self, rng, vocab):
        return nets.MultiLSTMNet(rng, vocab, self.target_feature, self.embed_dim, self.hidden_dim,
                                 self.n_layers, self.dropout, self.context_length)


class MultiLSTMAttentionPredictor(_MultiLSTMBase):
    """Per-feature LSTMs with attention normalized jointly over features and time."""

    kind = "multi-lstm-attn"

    def _build(self, rng, vocab):
        return nets.MultiLSTMAttentionNet(rng, vocab, self.target_feature, self.embed_dim,
                                          self.hidden_dim, self.n_layers, self.dropout,
                                          self.context_length)

    def attention_weights(self, X):
        """Joint attention weights, shape (n, F, L); each sample sums to one."""
        self.decision_function(X, batch_size=len(X) or 1)
        return self.network_.last_attention.astype(np.float64)


class _MultiTransformerBase(_MultiBase):
    def __init__(self, embed_dim=64, hidden_dim=128, n_layers=2, n_heads=4, dropout=0.1,
                 context_length=DEFAULT_CONTEXT_LENGTH, lr=1e-3, batch_size=32, max_epochs=100,
                 patience=10, grad_clip=1.0, seed=42, vocab_sizes=None, target_feature=0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.dropout = dropout
        self.context_length = context_length
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.grad_clip = grad_clip
        self.seed = seed
        self.vocab_sizes = vocab_sizes
        self.target_feature = target_feature


class MultiTransformerPredictor(_MultiTransformerBase):
    """Channel-concatenated feature embeddings through one encoder stack."""

    kind = "multi-transformer"

    def _build(self, rng, vocab):
        return nets.MultiTransformerNet(rng, vocab, self.target_feature, self.embed_dim,
                                        self.hidden_dim, self.n_layers, self.n_heads, self.dropout,
                                        self.context_length)


class MultiGPTPredictor(_MultiTransformerBase):
    """Projected feature embeddings through a causal decoder; last state predicts."""

    kind = "multi-gpt"

    def _build(self, rng, vocab):
        return nets.MultiGPTNet(rng, vocab, self.target_feature, self.embed_dim, self.hidden_dim,
                                self.n_layers, self.n_heads, self.dropout, self.context_length)

    def position_logits(self, X):
        check_is_fitted(self, "network_")
        X = self._check_X(X)
        self.network_.eval()
        return self.network_.position_logits(X).data.astype(np.float64)


NEURAL_KINDS = {
    cls.kind: cls
    for cls in (LSTMPredictor, LSTMAttentionPredictor, TransformerPredictor, GPTPredictor,
                MultiLSTMPredictor, MultiLSTMAttentionPredictor, MultiTransformerPredictor,
                MultiGPTPredictor)
}
