"""Mini-batch training loop with Adam and early stopping.

``fit`` is model-agnostic: anything exposing a ``params`` dict of Tensors
and a ``batch_loss(batch, rng, training)`` method can be trained. The loop
keeps a snapshot of the parameters at the epoch with minimum validation
loss and restores it before returning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import AdamState, adam_step
from .tensor import NumericError


@dataclass
class TrainConfig:
    batch_size: int = 32
    hidden_units: int = 64
    dropout_rate: float = 0.3
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0

    def validate(self) -> None:
        """Check the tuned-range invariants (dropout 0 means not applicable)."""
        if not 16 <= self.batch_size <= 128:
            raise ValueError(f"batch_size {self.batch_size} outside [16, 128]")
        if not 32 <= self.hidden_units <= 512:
            raise ValueError(f"hidden_units {self.hidden_units} outside [32, 512]")
        if self.dropout_rate != 0.0 and not 0.2 <= self.dropout_rate <= 0.4:
            raise ValueError(f"dropout_rate {self.dropout_rate} outside {{0}} U [0.2, 0.4]")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValueError("max_epochs must be >= 1 and patience >= 0")


@dataclass
class FitHistory:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    n_epochs: int = 0

    def as_dict(self) -> dict:
        return {
            "train_losses": [float(x) for x in self.train_losses],
            "val_losses": [float(x) for x in self.val_losses],
            "best_epoch": self.best_epoch,
            "n_epochs": self.n_epochs,
        }


def _batches(n: int, size: int, order: np.ndarray):
    for lo in range(0, n, size):
        yield order[lo : lo + size]


def _mean_loss(model, items, batch_size: int, rng: np.random.Generator) -> float:
    """Task-weighted mean loss over ``items`` without dropout."""
    total = 0.0
    for idx in _batches(len(items), batch_size, np.arange(len(items))):
        batch = [items[i] for i in idx]
        loss = model.batch_loss(batch, rng, training=False)
        total += float(loss.data) * len(batch)
    return total / len(items)


def fit(model, train_items: list, val_items: list, cfg: TrainConfig) -> FitHistory:
    """Train ``model`` in place, restoring the best-validation snapshot.

    Deterministic for a fixed ``cfg.seed``: one rng drives both the epoch
    shuffles and the dropout masks, consumed in a fixed order.
    """
    if not train_items or not val_items:
        raise ValueError("fit requires non-empty train and validation sets")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    params = model.params
    history = FitHistory()
    best_val = np.inf
    best_snapshot = None
    since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_items))
        epoch_total = 0.0
        for bi, idx in enumerate(_batches(len(train_items), cfg.batch_size, order)):
            batch = [train_items[i] for i in idx]
            for p in params.values():
                p.grad = None
            loss = model.batch_loss(batch, rng, training=True)
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {bi}")
            loss.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            adam_step({k: p.data for k, p in params.items()}, grads, state)
            epoch_total += float(loss.data) * len(batch)

        val_loss = _mean_loss(model, val_items, cfg.batch_size, rng)
        if not np.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        history.train_losses.append(epoch_total / len(train_items))
        history.val_losses.append(val_loss)
        history.n_epochs = epoch

        if val_loss < best_val:
            best_val = val_loss
            best_snapshot = {k: p.data.copy() for k, p in params.items()}
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    if best_snapshot is not None:
        for k, p in params.items():
            p.data[...] = best_snapshot[k]
    return history
