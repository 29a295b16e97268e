"""Minibatch Adam training with early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from chordlab._rng import make_rng
from chordlab.autodiff import Tape
from chordlab.autodiff.optim import Adam, clip_grad_norm
from chordlab.errors import DivergedLoss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 42
    grad_clip: float | None = 1.0
    min_loss: float | None = 0.01

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    def to_dict(self):
        return asdict(self)


class EarlyStopping:
    """Tracks the best validation loss; ``update`` returns True when patience runs out."""

    def __init__(self, patience):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, value, epoch):
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class TrainResult:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    stopped_early: bool = False


def evaluate_loss(net, X, y, batch_size=256):
    net.eval()
    total = 0.0
    for start in range(0, len(y), batch_size):
        sl = slice(start, start + batch_size)
        total += float(net.loss(X[sl], y[sl]).data) * len(y[sl])
    return total / max(len(y), 1)


def train_model(net, X, y, X_val=None, y_val=None, config=None, callback=None):
    """Fit ``net`` by minimizing its cross-entropy loss with Adam.

    With validation data, training stops once the validation loss has not
    improved for ``config.patience`` epochs and the parameters from the best
    validation epoch are restored. Raises DivergedLoss on a non-finite loss.
    """
    config = config or TrainConfig()
    rng = make_rng(config.seed, 0x7A1)
    params = net.parameters()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    has_val = X_val is not None and len(y_val) > 0
    stopper = EarlyStopping(config.patience)
    best_state = None
    result = TrainResult()
    n = len(y)
    for epoch in range(config.max_epochs):
        net.train()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            opt.zero_grad()
            with Tape() as tape:
                loss = net.loss(X[idx], y[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            tape.backward(loss, params)
            if config.grad_clip:
                clip_grad_norm(params, config.grad_clip)
            opt.step()
            total += value * len(idx)
        result.train_losses.append(total / n)
        converged = config.min_loss is not None and result.train_losses[-1] < config.min_loss
        result.epochs_run = epoch + 1
        if callback is not None:
            callback(epoch, result)
        if has_val:
            val = evaluate_loss(net, X_val, y_val)
            if not np.isfinite(val):
                raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
            result.val_losses.append(val)
            stop = stopper.update(val, epoch)
            if stopper.best_epoch == epoch:
                best_state = net.state_dict()
            log.debug("epoch %d train %.4f val %.4f", epoch, result.train_losses[-1], val)
            if stop:
                result.stopped_early = True
                break
        if converged:
            result.stopped_early = True
            break
    if best_state is not None:
        net.load_state_dict(best_state)
        result.best_epoch = stopper.best_epoch
    else:
        result.best_epoch = result.epochs_run - 1
    net.eval()
    return result
