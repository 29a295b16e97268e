"""First-order and variable-order Markov next-chord predictors.

Both models use additive smoothing over the full vocabulary::

    P(j | C) = (N(C, j) + alpha) / (sum_k N(C, k) + V * alpha)

where the context key ``C`` ends with the current chord, so the first-order
model is exactly the variable-order model with ``max_order=1``. Variable-order
lookups use the longest stored suffix of the context, then back off to
shorter suffixes and finally to the uniform distribution.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from chordlab.corpus import PAD_ID
from chordlab.errors import EmptyCorpus, VersionMismatch, CorruptCheckpoint
from chordlab.validation import check_contexts, check_targets, infer_vocab_size

FORMAT_VERSION = 1
DEFAULT_ALPHA = 0.01
DEFAULT_MAX_ORDER = 4


def _strip(context):
    return [int(t) for t in context if t != PAD_ID]


def _smoothed(counts_row, total, alpha, V):
    if total == 0 and alpha == 0:
        return np.full(V, 1.0 / V)
    return (counts_row + alpha) / (total + V * alpha)


class _MarkovBase(BaseEstimator):
    kind = None
    multi_feature = False

    def predict(self, X):
        """Greedy next-token ids; ties go to the lowest id."""
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def _check_fit_input(self, X, y):
        X = check_contexts(X, ndim=2)
        if len(X) == 0:
            raise EmptyCorpus("cannot fit a Markov model on zero samples")
        y = check_targets(y, len(X))
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        V = self.vocab_size or infer_vocab_size(X, y)
        return X, y, V

    def save(self, path, vocab=None):
        Path(path).write_text(json.dumps(self.to_dict(vocab)), encoding="utf-8")


class MarkovPredictor(_MarkovBase):
    """First-order Markov chain over token ids.

    Parameters
    ----------
    alpha : float
        Additive smoothing constant (>= 0).
    vocab_size : int or None
        Size of the token vocabulary; inferred from the data when None.
    """

    kind = "markov"

    def __init__(self, alpha=DEFAULT_ALPHA, vocab_size=None):
        self.alpha = alpha
        self.vocab_size = vocab_size

    def fit(self, X, y):
        X, y, V = self._check_fit_input(X, y)
        counts = np.zeros((V, V), dtype=np.int64)
        for ctx, target in zip(X, y):
            ctx = _strip(ctx)
            if ctx:
                counts[ctx[-1], target] += 1
        self.counts_ = counts
        self.n_tokens_ = V
        return self

    @property
    def transition_matrix_(self):
        """Row-stochastic V x V matrix of smoothed transition probabilities."""
        check_is_fitted(self, "counts_")
        totals = self.counts_.sum(axis=1)
        return np.stack([_smoothed(self.counts_[i], totals[i], self.alpha, self.n_tokens_)
                         for i in range(self.n_tokens_)])

    def predict_proba(self, X):
        check_is_fitted(self, "counts_")
        X = check_contexts(X, ndim=2)
        V = self.n_tokens_
        P = self.transition_matrix_
        out = np.empty((len(X), V))
        for n, ctx in enumerate(X):
            ctx = _strip(ctx)
            if ctx and ctx[-1] < V:
                out[n] = P[ctx[-1]]
            else:
                out[n] = 1.0 / V
        return out

    def to_dict(self, vocab=None):
        check_is_fitted(self, "counts_")
        rows, cols = np.nonzero(self.counts_)
        triples = [[[int(i)], int(j), int(self.counts_[i, j])] for i, j in zip(rows, cols)]
        return {"format_version": FORMAT_VERSION, "type": "markov", "alpha": self.alpha,
                "max_order": 1, "vocab_size": self.n_tokens_,
                "vocab": list(vocab) if vocab is not None else None, "counts": triples}


class VariableOrderMarkovPredictor(_MarkovBase):
    """Variable-order Markov model with longest-suffix backoff.

    Counts are stored for every context length ``1..max_order`` seen in
    training. Fitting from windows shorter than ``max_order`` caps the usable
    order at the window length.
    """

    kind = "vom"

    def __init__(self, alpha=DEFAULT_ALPHA, max_order=DEFAULT_MAX_ORDER, vocab_size=None):
        self.alpha = alpha
        self.max_order = max_order
        self.vocab_size = vocab_size

    def fit(self, X, y):
        X, y, V = self._check_fit_input(X, y)
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        counts = defaultdict(lambda: defaultdict(int))
        D = int(self.max_order)
        for ctx, target in zip(X, y):
            ctx = _strip(ctx)
            for m in range(1, min(D, len(ctx)) + 1):
                counts[tuple(ctx[-m:])][int(target)] += 1
        self.counts_ = {k: dict(v) for k, v in counts.items()}
        self.totals_ = {k: sum(v.values()) for k, v in self.counts_.items()}
        self.n_tokens_ = V
        return self

    def longest_suffix(self, context):
        """Longest stored suffix of ``context`` (PAD stripped), or ``()``."""
        check_is_fitted(self, "counts_")
        ctx = _strip(context)
        for m in range(min(int(self.max_order), len(ctx)), 0, -1):
            key = tuple(ctx[-m:])
            if key in self.counts_:
                return key
        return ()

    def distribution(self, key):
        V = self.n_tokens_
        row = np.zeros(V)
        total = 0
        if key:
            for j, c in self.counts_[key].items():
                row[j] = c
            total = self.totals_[key]
        return _smoothed(row, total, self.alpha, V)

    def predict_proba(self, X):
        check_is_fitted(self, "counts_")
        X = check_contexts(X, ndim=2)
        out = np.empty((len(X), self.n_tokens_))
        cache = {}
        for n, ctx in enumerate(X):
            key = self.longest_suffix(ctx)
            if key not in cache:
                cache[key] = self.distribution(key)
            out[n] = cache[key]
        return out

    def to_dict(self, vocab=None):
        check_is_fitted(self, "counts_")
        triples = [[list(ctx), int(j), int(c)]
                   for ctx, row in sorted(self.counts_.items()) for j, c in sorted(row.items())]
        return {"format_version": FORMAT_VERSION, "type": "vom", "alpha": self.alpha,
                "max_order": int(self.max_order), "vocab_size": self.n_tokens_,
                "vocab": list(vocab) if vocab is not None else None, "counts": triples}


def from_dict(doc):
    """Rebuild a fitted Markov/VOM model from its JSON document."""
    try:
        kind = doc["type"]
        version = doc["format_version"]
    except (KeyError, TypeError):
        raise VersionMismatch("not a Markov model document") from None
    if kind not in ("markov", "vom") or version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported Markov document type={kind!r} version={version!r}")
    try:
        V = int(doc["vocab_size"])
        if kind == "markov":
            model = MarkovPredictor(alpha=doc["alpha"], vocab_size=V)
            model.counts_ = np.zeros((V, V), dtype=np.int64)
            for ctx, j, c in doc["counts"]:
                model.counts_[ctx[-1], j] = c
        else:
            model = VariableOrderMarkovPredictor(alpha=doc["alpha"], max_order=doc["max_order"],
                                                 vocab_size=V)
            counts = defaultdict(dict)
            for ctx, j, c in doc["counts"]:
                counts[tuple(ctx)][int(j)] = int(c)
            model.counts_ = dict(counts)
            model.totals_ = {k: sum(v.values()) for k, v in model.counts_.items()}
        model.n_tokens_ = V
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptCheckpoint(f"malformed Markov document: {exc}") from None
    return model


def load(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from None
    return from_dict(doc)


# Functional entry points mirroring the estimator methods.

def fit_first_order(X, y, alpha=DEFAULT_ALPHA, vocab_size=None):
    return MarkovPredictor(alpha=alpha, vocab_size=vocab_size).fit(X, y)


def fit_variable_order(X, y, alpha=DEFAULT_ALPHA, max_order=DEFAULT_MAX_ORDER, vocab_size=None):
    return VariableOrderMarkovPredictor(alpha=alpha, max_order=max_order, vocab_size=vocab_size).fit(X, y)


def predict_distribution(model, context):
    return model.predict_proba(np.asarray(context)[None])[0]


def predict_next(model, context):
    return int(np.argmax(predict_distribution(model, context)))
