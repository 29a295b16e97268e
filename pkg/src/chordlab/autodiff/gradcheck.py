"""Central finite-difference gradient checking (test harness)."""

import numpy as np

from chordlab.autodiff.tensor import Tape


def numeric_grad(fn, inputs, index, positions, h=1e-5):
    x = inputs[index]
    out = np.zeros(len(positions))
    for n, pos in enumerate(positions):
        orig = x.data[pos]
        x.data[pos] = orig + h
        fp = float(fn(*inputs).data)
        x.data[pos] = orig - h
        fm = float(fn(*inputs).data)
        x.data[pos] = orig
        out[n] = (fp - fm) / (2 * h)
    return out


def gradcheck(fn, inputs, h=1e-5, max_checks=None, rng=None, floor=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps the input tensors to a scalar tensor. Inputs must be float64
    tensors with ``requires_grad=True`` for those to be checked. With
    ``max_checks`` only that many randomly chosen elements per input are
    probed. Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps round-off in gradients that are analytically zero from dominating.
    """
    for t in inputs:
        if t.requires_grad and t.data.dtype != np.float64:
            raise TypeError("gradcheck requires float64 inputs")
        t.grad = None
    with Tape() as tape:
        loss = fn(*inputs)
    tape.backward(loss, params=[t for t in inputs if t.requires_grad])
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        flat = list(np.ndindex(t.shape))
        if max_checks is not None and len(flat) > max_checks:
            flat = [flat[j] for j in rng.choice(len(flat), max_checks, replace=False)]
        analytic = np.array([t.grad[p] for p in flat])
        numeric = numeric_grad(fn, inputs, i, flat, h)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        # entries that are zero both ways are exact
        rel[(analytic == 0) & (np.abs(numeric) < floor)] = 0.0
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst

