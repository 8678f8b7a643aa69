"""Mini-batch training with validation-based model selection.

A task object owns the data and knows how to turn a list of item indices
into a loss; ``train`` owns the schedule, optimiser and bookkeeping.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import functional as F
from ..shapes import chamfer
from .optim import make_optimizer, step_decay

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    decay_factor: float = 1.0
    decay_period: int = 1
    batch_size: int = 32
    max_epochs: int = 10
    dropout: float = 0.0
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0 or self.decay_factor <= 0 or self.decay_period < 1:
            raise ValueError("learning rate, decay factor and decay period must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch size and epoch count must be at least 1")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout {self.dropout} outside [0, 1)")

    def lr_at(self, epoch: int) -> float:
        return step_decay(self.lr, self.decay_factor, self.decay_period, epoch)

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


# split-1 hyperparameters; "every N steps" is applied per epoch
MATERIAL_TRAIN = TrainConfig("sgd", 0.00903, 0.1, 200, 36, 300, 0.52105)
SHAPE_TRAIN = TrainConfig("adam", 5e-6, 0.7, 500, 500, 1000, 0.0)
REID_TRAIN = TrainConfig("adam", 3.6515e-5, 1.0, 1, 200, 500, 0.2348)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_metric: float
    val_metric: float
    synthetic_fraction: float = float("nan")


@dataclass
class TrainResult:
    state: dict
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")


def _take(inputs, idx):
    if isinstance(inputs, tuple):
        return tuple(np.asarray(a[idx]) for a in inputs)
    if isinstance(inputs, np.ndarray):
        return (inputs[idx],)
    return inputs.take(idx)


def _size(inputs):
    return len(inputs[0]) if isinstance(inputs, tuple) else len(inputs)


class ClassificationTask:
    """Cross-entropy on indexed inputs; validation metric is accuracy.

    ``inputs`` is an array, a tuple of arrays, or an object with ``take(idx)``
    returning a tuple of model arguments (used for lazily gathered samples).
    """

    def __init__(self, inputs, labels, val_inputs, val_labels, eval_batch=64):
        self.inputs, self.labels = inputs, np.asarray(labels, dtype=np.int64)
        self.val_inputs, self.val_labels = val_inputs, np.asarray(val_labels, dtype=np.int64)
        if _size(inputs) != len(self.labels) or _size(val_inputs) != len(self.val_labels):
            raise ValueError("inputs and labels differ in length")
        if len(self.labels) == 0 or len(self.val_labels) == 0:
            raise ValueError("train and validation sets must be nonempty")
        self.eval_batch = eval_batch

    def epoch_items(self, epoch, rng, blend=None):
        if blend is not None:
            raise ValueError("blending applies to the shape task only")
        return rng.permutation(len(self.labels)), float("nan")

    def step(self, model, idx):
        logits = model(*_take(self.inputs, idx))
        loss = F.cross_entropy(logits, self.labels[idx])
        return loss, float(np.sum(logits.data.argmax(axis=1) == self.labels[idx]))

    def predict(self, model, inputs):
        out = []
        for s in range(0, _size(inputs), self.eval_batch):
            idx = np.arange(s, min(s + self.eval_batch, _size(inputs)))
            out.append(model(*_take(inputs, idx)).data.argmax(axis=1))
        return np.concatenate(out)

    def validate(self, model):
        return float(np.mean(self.predict(model, self.val_inputs) == self.val_labels))


def pad_clouds(clouds):
    """Stack clouds of different sizes by repeating each cloud's points cyclically."""
    n = max(len(c) for c in clouds)
    return np.stack([np.asarray(c)[np.arange(n) % len(c)] for c in clouds])


class ShapeTask:
    """Chamfer-L2 training on normalised (contact cloud, ground truth) pairs.

    Items are ``(input_points, target_points)`` in normalised coordinates.
    Validation returns minus the mean CD-L1 in metres, so higher is better;
    ``val_scales`` maps each validation item back to metres.
    """

    def __init__(self, synthetic, val, val_scales=None, real=(), epoch_size=None, loss_variant="L2"):
        self.synthetic, self.real, self.val = list(synthetic), list(real), list(val)
        if not (self.synthetic or self.real) or not self.val:
            raise ValueError("train and validation sets must be nonempty")
        self.val_scales = np.ones(len(self.val)) if val_scales is None else np.asarray(val_scales, dtype=float)
        self.epoch_size = epoch_size or len(self.synthetic) + len(self.real)
        self.loss_variant = loss_variant
        self.pool = self.synthetic + self.real

    def epoch_items(self, epoch, rng, blend=None):
        if blend is None:
            return rng.permutation(len(self.pool)), float("nan")
        frac = blend(epoch)
        n_syn = int(round(frac * self.epoch_size))
        n_real = self.epoch_size - n_syn
        if (n_syn and not self.synthetic) or (n_real and not self.real):
            raise ValueError(f"epoch {epoch}: blend fraction {frac} needs data that is missing")
        syn = rng.choice(len(self.synthetic), n_syn, replace=n_syn > len(self.synthetic)) if n_syn else []
        real = rng.choice(len(self.real), n_real, replace=n_real > len(self.real)) if n_real else []
        items = np.concatenate([np.asarray(syn, dtype=int), len(self.synthetic) + np.asarray(real, dtype=int)])
        return rng.permutation(items), frac

    def step(self, model, idx):
        x = pad_clouds([self.pool[i][0] for i in idx])
        pred = model(x.astype(model.fc3.weight.data.dtype))
        return F.chamfer_loss(pred, [self.pool[i][1] for i in idx], self.loss_variant), float("nan")

    def predict(self, model, clouds):
        return [model(np.asarray(c, dtype=model.fc3.weight.data.dtype)[None]).data[0] for c in clouds]

    def validate(self, model):
        preds = self.predict(model, [x for x, _ in self.val])
        cds = [chamfer(p, t, "L1") * s for p, (_, t), s in zip(preds, self.val, self.val_scales)]
        return -float(np.mean(cds))


def train(model, task, cfg: TrainConfig, blend=None, metrics_path=None, epoch_callback=None) -> TrainResult:
    """Train ``model`` in place; the returned state and the model hold the best-validation weights.

    ``blend`` maps an epoch to the synthetic fraction of that epoch's items.
    Raises ``TrainingDiverged`` on a non-finite loss.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer, model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay)
    result = TrainResult(state=model.state_dict())
    for epoch in range(cfg.max_epochs):
        opt.lr = cfg.lr_at(epoch)
        items, frac = task.epoch_items(epoch, rng, blend)
        model.train()
        losses, correct, seen = [], 0.0, 0
        for start in range(0, len(items), cfg.batch_size):
            idx = np.asarray(items[start:start + cfg.batch_size])
            loss, hits = task.step(model, idx)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(f"epoch {epoch}, batch {start // cfg.batch_size}: loss is {value} "
                                       f"(lr {opt.lr:g})")
            model.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value * len(idx))
            correct += hits
            seen += len(idx)
        model.eval()
        val = task.validate(model)
        m = EpochMetrics(epoch, opt.lr, float(np.sum(losses) / seen), correct / seen, val, frac)
        result.history.append(m)
        if val > result.best_metric:
            result.best_metric, result.best_epoch = val, epoch
            result.state = model.state_dict()
        log.debug("epoch %d lr %.3g loss %.5f train %.4f val %.5f", epoch, opt.lr, m.train_loss,
                  m.train_metric, val)
        if epoch_callback is not None:
            epoch_callback(m)
    model.load_state_dict(result.state)
    if metrics_path is not None:
        write_metrics_csv(metrics_path, result.history)
    return result


def write_metrics_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        names = list(asdict(history[0]).keys()) if history else list(EpochMetrics.__dataclass_fields__)
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for m in history:
            w.writerow(asdict(m))

