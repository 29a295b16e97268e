"""Minimal dense tensors with reverse-mode automatic differentiation."""

from chordlab.autodiff.tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    concat,
    cross_entropy,
    default_dtype,
    dropout,
    embedding,
    get_default_dtype,
    layer_norm,
    log_softmax,
    lstm_recurrence,
    mask_fill,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_,
    softmax,
    stack,
    sub,
    take,
    tanh,
    transpose,
    tsum,
)
from chordlab.autodiff.optim import Adam, clip_grad_norm


def backward(loss, params=()):
    """Run reverse mode from scalar ``loss`` over the tape that produced it."""
    if loss._tape is None:
        raise RuntimeError("loss was not computed under an active Tape")
    loss._tape.backward(loss, params)
