"""Accuracy, perplexity and embedding similarity over one prediction set."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from chordlab.embeddings import w2v_similarity
from chordlab.errors import EmptyInput, LengthMismatch

PROB_FLOOR = 1e-10


@dataclass
class MetricReport:
    accuracy: float
    perplexity: float
    similarity: float
    n: int
    n_clamped: int = 0

    def to_dict(self):
        return asdict(self)


def accuracy(predictions, targets):
    p = np.asarray(predictions).reshape(-1)
    t = np.asarray(targets).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise EmptyInput("accuracy of an empty prediction set")
    return float(np.mean(p == t))


def perplexity(target_probs, floor=PROB_FLOOR, return_clamped=False):
    """``exp(-mean(log p))`` with probabilities clamped from below at ``floor``."""
    p = np.asarray(target_probs, dtype=np.float64).reshape(-1)
    if len(p) == 0:
        raise EmptyInput("perplexity of an empty prediction set")
    clamped = int(np.sum(p < floor))
    value = float(np.exp(-np.mean(np.log(np.maximum(p, floor)))))
    return (value, clamped) if return_clamped else value


def mean_similarity(predictions, targets, embeddings):
    p = np.asarray(predictions).reshape(-1)
    t = np.asarray(targets).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise EmptyInput("similarity of an empty prediction set")
    cache = {}
    sims = np.empty(len(p))
    for n, (a, b) in enumerate(zip(p.tolist(), t.tolist())):
        key = (a, b)
        if key not in cache:
            cache[key] = w2v_similarity(a, b, embeddings)
        sims[n] = cache[key]
    return float(np.mean(sims))


def evaluate(model, X, y, embeddings):
    """All three metrics from a single ``predict_proba`` pass."""
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if len(y) == 0:
        raise EmptyInput("no evaluation samples")
    probs = model.predict_proba(X)
    if len(probs) != len(y):
        raise LengthMismatch(f"{len(probs)} predictions vs {len(y)} targets")
    preds = np.argmax(probs, axis=1)
    in_range = y < probs.shape[1]
    p_true = np.zeros(len(y))
    p_true[in_range] = probs[np.flatnonzero(in_range), y[in_range]]
    ppl, clamped = perplexity(p_true, return_clamped=True)
    return MetricReport(accuracy=accuracy(preds, y), perplexity=ppl,
                        similarity=mean_similarity(preds, y, embeddings), n=len(y),
                        n_clamped=clamped)
