"""Dense tensors with define-by-run reverse-mode differentiation.

Operations executed inside an active :class:`Tape` are recorded together with
their adjoint rule; ``tape.backward(loss)`` replays them in exact reverse
order. Outside a tape, ops run as plain numpy and build no graph.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from chordlab.errors import DoubleBackward, IndexOutOfRange, ShapeMismatch

_state = threading.local()


def _tapes():
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def get_default_dtype():
    return getattr(_state, "dtype", np.float32)


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the float type of newly created tensors.

    float64 is meant for gradient checking; training runs in float32.
    """
    old = get_default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_tape")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(get_default_dtype())
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self._tape is None:
            raise RuntimeError("tensor was not produced on a tape")
        self._tape.backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731
    __neg__ = lambda self: scale(self, -1.0)  # noqa: E731
    __getitem__ = lambda self, idx: take(self, idx)  # noqa: E731

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed operations for one backward pass.

    Use as a context manager; tapes nest per thread. A tape can be consumed
    by exactly one ``backward`` call unless :meth:`reset` is called.
    """

    def __init__(self):
        self.ops = []
        self.consumed = False

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().remove(self)
        return False

    def __len__(self):
        return len(self.ops)

    def record(self, out, inputs, backward_fn):
        self.ops.append((out, inputs, backward_fn))
        out.requires_grad = True
        out._tape = self

    def reset(self):
        self.ops = []
        self.consumed = False

    def backward(self, loss, params=()):
        """Propagate d(loss)/d(leaf) into ``.grad`` of every requires-grad leaf.

        Leaves reached by the tape (and any extra ``params``) that receive no
        gradient get an explicit zero array.
        """
        if self.consumed:
            raise DoubleBackward("tape already consumed by backward(); call reset() first")
        if loss.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
        self.consumed = True
        produced = {id(out) for out, _, _ in self.ops}
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for out, inputs, fn in reversed(self.ops):
            g = grads.pop(id(out), None)
            for t in inputs:
                if t.requires_grad and id(t) not in produced:
                    leaves[id(t)] = t
            if g is None:
                continue
            for t, gi in zip(inputs, fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        if id(loss) not in produced and loss.requires_grad:
            leaves[id(loss)] = loss
        for p in params:
            leaves[id(p)] = p
        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(t.data)
            t.grad = g.astype(t.data.dtype, copy=False) if t.grad is None else t.grad + g
        self.ops = []


def _active_tape(*inputs):
    tapes = _tapes()
    if tapes and any(t.requires_grad for t in inputs):
        return tapes[-1]
    return None


def _make(data, inputs, backward_fn):
    out = Tensor(data, dtype=data.dtype)
    tape = _active_tape(*inputs)
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (trailing-dim bias broadcasting only)."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


def _check_bias_shapes(a, b, op):
    if a.shape == b.shape:
        return
    if b.ndim < a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    if a.ndim < b.ndim and b.shape[b.ndim - a.ndim:] == a.shape:
        return
    raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


# ----------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_bias_shapes(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_bias_shapes(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_bias_shapes(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c):
    c = a.data.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def _sig(x):
    # tanh form never overflows
    return 0.5 * (1 + np.tanh(0.5 * x))


def sigmoid(x):
    y = _sig(x.data)
    return _make(y, (x,), lambda g: (g * y * (1 - y),))


def tanh(x):
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1 - y * y),))


def relu(x):
    y = np.maximum(x.data, 0)
    return _make(y, (x,), lambda g: (g * (x.data > 0),))


def softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    return _make(y, (x,), lambda g: (g - np.exp(y) * g.sum(axis=axis, keepdims=True),))


def mask_fill(x, mask, value):
    """Replace entries where ``mask`` is true by the constant ``value``."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    y = np.where(mask, x.data.dtype.type(value), x.data)
    return _make(y, (x,), lambda g: (np.where(mask, 0, g).astype(g.dtype),))


def dropout(x, p, rng, training=True):
    if not training or p <= 0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / x.data.dtype.type(1 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------- reductions

def tsum(x, axis=None):
    y = np.asarray(x.data.sum(axis=axis))

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)
    return _make(y, (x,), back)


def mean(x, axis=None):
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(tsum(x, axis), 1.0 / n)


# ------------------------------------------------------------------- linear

def matmul(a, b):
    """Matrix product over the last two axes; ``b`` may be a shared 2-D weight."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} x {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"matmul: batch dims differ {a.shape} x {b.shape}")
    y = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2 and a.ndim > 2:
            a2 = a.data.reshape(-1, a.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb
    return _make(y, (a, b), back)


def embedding(table, ids):
    """Gather rows of ``table`` (V, d) for integer ``ids`` of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexOutOfRange(f"token id outside embedding table of size {V}")

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)
    return _make(table.data[ids], (table,), back)


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data
    n = x.shape[-1]

    def back(g):
        gx_hat = g * gain.data
        gx = inv / n * (n * gx_hat - gx_hat.sum(-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(x.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)
    return _make(y.astype(x.data.dtype), (x, gain, bias), back)


def cross_entropy(logits, targets, ignore_index=None):
    """Mean negative log-likelihood of integer ``targets`` under ``logits`` (B, V).

    Rows whose target equals ``ignore_index`` are excluded from the mean.
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != len(targets):
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    keep = np.ones(len(targets), dtype=bool) if ignore_index is None else targets != ignore_index
    n = max(int(keep.sum()), 1)
    safe = np.where(keep, targets, 0)
    if safe.size and safe.max() >= logits.shape[1]:
        raise IndexOutOfRange("target id outside logit vocabulary")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(targets))
    nll = (lse - z[rows, safe]) * keep
    loss = np.asarray(nll.sum() / n, dtype=logits.data.dtype)

    def back(g):
        p = np.exp(z - lse[:, None])
        p[rows, safe] -= 1
        p *= (keep / n)[:, None]
        return (p * g,)
    return _make(loss, (logits,), back)


def lstm_recurrence(proj, w_hidden):
    """Run an LSTM over precomputed input projections.

    ``proj`` (B, L, 4H) holds ``x_t W_x + b`` for gates in the order input,
    forget, cell, output; ``w_hidden`` (H, 4H) is the recurrent weight. Returns
    all hidden states (B, L, H). Initial hidden and cell states are zero.
    """
    B, L, G = proj.shape
    H = w_hidden.shape[0]
    if G != 4 * H or w_hidden.shape[1] != G:
        raise ShapeMismatch(f"lstm_recurrence: proj {proj.shape} vs w_hidden {w_hidden.shape}")
    dt = proj.data.dtype
    h = np.zeros((B, H), dtype=dt)
    c = np.zeros((B, H), dtype=dt)
    hs = np.zeros((B, L + 1, H), dtype=dt)
    cs = np.zeros((B, L + 1, H), dtype=dt)
    gates = np.zeros((B, L, G), dtype=dt)
    Wh = w_hidden.data
    for t in range(L):
        z = proj.data[:, t] + h @ Wh
        i = _sig(z[:, :H])
        f = _sig(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sig(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        hs[:, t + 1] = h
        cs[:, t + 1] = c

    def back(gH):
        dproj = np.zeros_like(proj.data)
        dWh = np.zeros_like(Wh)
        dh_next = np.zeros((B, H), dtype=dt)
        dc_next = np.zeros((B, H), dtype=dt)
        for t in range(L - 1, -1, -1):
            i, f, g, o = (gates[:, t, k * H:(k + 1) * H] for k in range(4))
            tc = np.tanh(cs[:, t + 1])
            dh = gH[:, t] + dh_next
            dc = dh * o * (1 - tc * tc) + dc_next
            dz = np.concatenate([dc * g * i * (1 - i),
                                 dc * cs[:, t] * f * (1 - f),
                                 dc * i * (1 - g * g),
                                 dh * tc * o * (1 - o)], axis=1)
            dproj[:, t] = dz
            dWh += hs[:, t].T @ dz
            dh_next = dz @ Wh.T
            dc_next = dc * f
        return dproj, dWh
    return _make(hs[:, 1:].copy(), (proj, w_hidden), back)


# ------------------------------------------------------------------- shaping

def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
                t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeMismatch(f"concat: {[x.shape for x in tensors]} along axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors),
                 lambda g: tuple(np.split(g, sizes, axis=ax)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ShapeMismatch(f"stack: shapes differ {[t.shape for t in tensors]}")
    ax = axis % (tensors[0].ndim + 1)
    return _make(np.stack([t.data for t in tensors], axis=ax), tuple(tensors),
                 lambda g: tuple(np.moveaxis(g, ax, 0)))


def reshape(x, shape):
    try:
        y = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    return _make(y, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def _is_basic(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def take(x, index):
    """Indexing / slicing (``x[index]``) with a scatter-add adjoint."""
    y = np.array(x.data[index], copy=True)
    basic = _is_basic(index)

    def back(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)
    return _make(y, (x,), back)


slice_ = take
