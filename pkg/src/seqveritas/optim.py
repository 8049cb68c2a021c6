"""Adam updates, gradient clipping, early stopping, the epoch loop, and
k-fold cross-validation.

The epoch loop owns the model exclusively; the reference mode is
single-threaded and fully deterministic in (data, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Prng
from .objective import bce, evaluate, reg_penalty


class NonFiniteGradient(FloatingPointError):
    pass


class EmptyDataset(ValueError):
    pass


class BadK(ValueError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0  # shared step counter, incremented once per optimizer step

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


def adam_step(params, state):
    """One Adam update over every tensor, with bias correction."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(f"non-finite gradient in {p.name}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p in params:
        p.m[...] = state.beta1 * p.m + (1.0 - state.beta1) * p.grad
        p.v[...] = state.beta2 * p.v + (1.0 - state.beta2) * p.grad * p.grad
        m_hat = p.m / bc1
        v_hat = p.v / bc2
        p.value[...] = p.value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_gradients(params, max_norm=5.0):
    """Scale all grads by max_norm/norm when the global L2 norm exceeds
    max_norm; returns the pre-clip norm."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


class EarlyStopper:
    """Stops when validation loss has not improved by min_delta for more
    than `patience` epochs; remembers the best snapshot."""

    def __init__(self, patience=2, min_delta=1e-4):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = float("inf")
        self.best_snapshot = None
        self.best_epoch = None
        self.epochs_since_best = 0

    def update(self, val_loss, snapshot_fn, epoch):
        """Feed one epoch's validation loss; returns True when training
        should stop."""
        if val_loss < self.best_loss - self.min_delta:
            self.best_loss = val_loss
            self.best_snapshot = snapshot_fn()
            self.best_epoch = epoch
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        return self.epochs_since_best > self.patience


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    patience: int = 2
    min_delta: float = 1e-4
    max_norm: float = 5.0


@dataclass
class TrainingHistory:
    epochs: list = field(default_factory=list)

    def record(self, **kwargs):
        self.epochs.append(kwargs)

    def to_jsonl(self):
        import json
        return "\n".join(json.dumps(e) for e in self.epochs)


def _batch_slices(n, batch_size, merge_trailing_singleton):
    """Start/stop pairs covering [0, n); the last incomplete batch is kept.
    A trailing batch of exactly 1 is merged into the previous batch when
    batch-norm is in play (its train mode needs batch >= 2)."""
    slices = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    if (merge_trailing_singleton and len(slices) > 1
            and slices[-1][1] - slices[-1][0] == 1):
        last = slices.pop()
        prev = slices.pop()
        slices.append((prev[0], last[1]))
    return slices


def predict_in_batches(model, x, batch_size=256):
    out = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], batch_size):
        probs, _ = model.forward(x[start:start + batch_size], mode="eval")
        out[start:start + batch_size] = probs
    return out


def fit(model, train_x, train_y, val_x, val_y, config):
    """Train with minibatch Adam, gradient clipping, and early stopping on
    validation loss; restores the best weights before returning."""
    n = train_x.shape[0]
    if n == 0 or val_x.shape[0] == 0:
        raise EmptyDataset("train and validation sets must be non-empty")
    cfg = model.config
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                      eps=cfg.adam_eps)
    rng = Prng(config.seed)
    stopper = EarlyStopper(patience=config.patience,
                           min_delta=config.min_delta)
    history = TrainingHistory()
    has_bn = bool(model.bn_running)

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start, stop in _batch_slices(n, config.batch_size, has_bn):
            idx = perm[start:stop]
            xb, yb = train_x[idx], train_y[idx]
            model.zero_grads()
            probs, caches = model.forward(xb, mode="train", rng=rng)
            data_loss = bce(probs, yb)
            model.backward(caches, probs, yb)
            penalty = reg_penalty(model.params, accumulate_grads=True)
            clip_gradients(model.params, config.max_norm)
            adam_step(model.params, state)
            epoch_loss += (data_loss + penalty) * len(idx)
        train_loss = epoch_loss / n

        val_probs = predict_in_batches(model, val_x)
        val_loss = bce(val_probs, val_y)
        _, report = evaluate(val_probs, val_y, loss=val_loss)
        history.record(epoch=epoch, train_loss=train_loss,
                       val_loss=val_loss, val_accuracy=report.accuracy)
        if stopper.update(val_loss, model.state_snapshot, epoch):
            break

    if stopper.best_snapshot is not None:
        model.restore_snapshot(stopper.best_snapshot)
    return history


def cross_validate(build_fn, x, y, k, seed, train_config):
    """k-fold CV: a fresh model per fold, re-seeded as seed+fold.

    `build_fn(fold_seed)` must return a freshly initialized model.
    Returns (per-fold MetricsReports, summary with mean/std accuracy)."""
    n = x.shape[0]
    if k < 2 or k > n:
        raise BadK(f"k={k} invalid for {n} examples")
    order = Prng(seed).permutation(n)
    base, extra = divmod(n, k)
    reports = []
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        val_idx = order[start:start + size]
        train_idx = np.concatenate([order[:start], order[start + size:]])
        start += size
        model = build_fn(seed + fold)
        fold_cfg = TrainConfig(**{**train_config.__dict__,
                                  "seed": seed + fold})
        fit(model, x[train_idx], y[train_idx], x[val_idx], y[val_idx],
            fold_cfg)
        probs = predict_in_batches(model, x[val_idx])
        _, report = evaluate(probs, y[val_idx])
        reports.append(report)
    accs = [r.accuracy for r in reports]
    summary = {
        "mean_accuracy": float(np.mean(accs)),
        "std_accuracy": float(np.std(accs)),
        "mean_f1": float(np.mean([r.f1 for r in reports])),
    }
    return reports, summary
