"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.exceptions import NotFittedError  # noqa: F401  (re-exported)

from chordlab.corpus import PAD_ID
from chordlab.errors import EmptyInput, LengthMismatch, ShapeMismatch


def check_contexts(X, ndim=2, context_length=None, n_features=None):
    """Coerce ``X`` to an int64 array of shape (n, L) or (n, L, F)."""
    X = np.asarray(X)
    if X.ndim == ndim - 1:
        X = X[None]
    if X.ndim != ndim:
        raise ShapeMismatch(f"expected contexts with {ndim} dims, got shape {X.shape}")
    if X.size and not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.equal(np.mod(X, 1), 0)):
            raise ValueError("contexts must hold integer token ids")
    X = X.astype(np.int64, copy=False)
    if X.size and X.min() < 0:
        raise ValueError("token ids must be non-negative")
    if context_length is not None and X.shape[1] != context_length:
        raise ShapeMismatch(f"expected context length {context_length}, got {X.shape[1]}")
    if ndim == 3 and n_features is not None and X.shape[2] != n_features:
        raise ShapeMismatch(f"expected {n_features} features, got {X.shape[2]}")
    return X


def check_targets(y, n):
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if len(y) != n:
        raise LengthMismatch(f"{n} contexts but {len(y)} targets")
    if len(y) == 0:
        raise EmptyInput("no training samples")
    if y.min() < 0:
        raise ValueError("token ids must be non-negative")
    return y


def infer_vocab_size(*arrays):
    """Smallest vocabulary covering every id seen (at least the reserved ids)."""
    top = max((int(a.max()) for a in arrays if np.size(a)), default=PAD_ID)
    return max(top + 1, 3)
