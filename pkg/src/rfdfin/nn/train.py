"""Training loop: adaptive-moment optimizer with decoupled weight decay,
cosine-annealed learning rate, early stopping on validation accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDiverged
from .layers import softmax_cross_entropy
from .models import TwoStreamNet


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 32
    t_max: int = 50
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    flip_prob: float = 0.5
    seed: int = 0


def cosine_lr(base_lr: float, epoch: int, t_max: int, min_lr: float = 0.0) -> float:
    """Cosine annealing from base_lr at epoch 0 down to min_lr at t_max."""
    if epoch >= t_max:
        return min_lr
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / t_max))


class AdamW:
    """Adam with decoupled weight decay (decay scales with the current lr)."""

    def __init__(self, params, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value, dtype=np.float64) for p in self.params]
        self.v = [np.zeros_like(p.value, dtype=np.float64) for p in self.params]

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad.astype(np.float64)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay > 0:
                update = update + self.weight_decay * p.value.astype(np.float64)
            p.value -= (self.lr * update).astype(p.value.dtype)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_acc: float


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_val_acc: float
    history: list[EpochRecord] = field(default_factory=list)


class FeatureDataset:
    """Pre-extracted features for one split.

    ridge:      (n, 128) float32, raw ridge features of the unflipped images
    ridge_flip: (n, 128) float32, same for the horizontally flipped images
    spec:       (n, h, w) float32 log-magnitude spectra (unflipped)
    spec_flip:  (n, h, w) float32, spectra of the flipped images
    labels:     (n,) int64, 0 = real, 1 = fake
    """

    def __init__(self, ridge, ridge_flip, spec, spec_flip, labels):
        self.ridge = np.asarray(ridge, dtype=np.float32)
        self.ridge_flip = np.asarray(ridge_flip, dtype=np.float32)
        self.spec = np.asarray(spec, dtype=np.float32)
        self.spec_flip = np.asarray(spec_flip, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        n = len(self.labels)
        if not (len(self.ridge) == len(self.ridge_flip) == len(self.spec)
                == len(self.spec_flip) == n):
            raise ValueError("feature arrays disagree on sample count")

    def __len__(self):
        return len(self.labels)


def _model_inputs(ds: FeatureDataset, idx: np.ndarray, kind: str,
                  flip_ridge: np.ndarray | None = None,
                  flip_spec: np.ndarray | None = None):
    ridge_x = None
    spec_x = None
    if kind != "artifact_only":
        base = ds.ridge[idx]
        if flip_ridge is not None:
            base = np.where(flip_ridge[:, None], ds.ridge_flip[idx], base)
        ridge_x = base
    if kind != "ridge_only":
        spec = ds.spec[idx]
        if flip_spec is not None:
            spec = np.where(flip_spec[:, None, None], ds.spec_flip[idx], spec)
        spec_x = spec[:, None, :, :]
    return ridge_x, spec_x


def evaluate_accuracy(model: TwoStreamNet, ds: FeatureDataset,
                      batch_size: int = 64) -> float:
    if len(ds) == 0:
        raise ValueError("empty dataset")
    correct = 0
    for start in range(0, len(ds), batch_size):
        idx = np.arange(start, min(start + batch_size, len(ds)))
        ridge_x, spec_x = _model_inputs(ds, idx, model.kind)
        logits = model.forward(ridge_x, spec_x, train=False)
        correct += int((logits.argmax(axis=1) == ds.labels[idx]).sum())
    return correct / len(ds)


def train(model: TwoStreamNet, train_ds: FeatureDataset, val_ds: FeatureDataset,
          config: TrainConfig) -> TrainResult:
    """Train to early stop; returns the best-validation state and history.

    Deterministic under config.seed: batch order, per-sample per-stream
    flips, and dropout masks all derive from it.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("train and validation splits must be non-empty")

    optimizer = AdamW(model.parameters(), lr=config.lr,
                      weight_decay=config.weight_decay, beta1=config.beta1,
                      beta2=config.beta2, eps=config.eps)

    result = TrainResult(best_state={}, best_epoch=-1, best_val_acc=-1.0)
    stale = 0
    n = len(train_ds)

    for epoch in range(config.t_max):
        lr = cosine_lr(config.lr, epoch, config.t_max)
        optimizer.lr = lr
        # per-epoch derived streams keep augmentation independent of batch order
        epoch_rng = np.random.default_rng((config.seed, epoch))
        order = epoch_rng.permutation(n)
        flips_ridge = epoch_rng.random(n) < config.flip_prob
        flips_spec = epoch_rng.random(n) < config.flip_prob

        loss_sum = 0.0
        seen = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            ridge_x, spec_x = _model_inputs(
                ds=train_ds, idx=idx, kind=model.kind,
                flip_ridge=flips_ridge[idx], flip_spec=flips_spec[idx])
            model.zero_grad()
            logits = model.forward(ridge_x, spec_x, train=True)
            loss, dlogits = softmax_cross_entropy(logits, train_ds.labels[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} sample {start}")
            model.backward(dlogits)
            optimizer.step()
            loss_sum += loss * len(idx)
            seen += len(idx)

        val_acc = evaluate_accuracy(model, val_ds)
        result.history.append(EpochRecord(
            epoch=epoch, lr=lr, train_loss=loss_sum / seen, val_acc=val_acc))

        if val_acc > result.best_val_acc:
            result.best_val_acc = val_acc
            result.best_epoch = epoch
            result.best_state = {k: v.copy() for k, v in model.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.load_state_dict(result.best_state)
    return result
