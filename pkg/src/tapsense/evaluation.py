"""Classification metrics, nearest-neighbour and random baselines, and reports."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .shapes import chamfer


def _labels(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.size == 0:
        raise ValueError("empty prediction list")
    if pred.shape != truth.shape:
        raise ValueError(f"{pred.size} predictions for {truth.size} labels")
    return pred, truth


def confusion_matrix(pred, truth, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    pred, truth = _labels(pred, truth)
    if min(pred.min(), truth.min()) < 0 or max(pred.max(), truth.max()) >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def accuracy(pred, truth) -> float:
    pred, truth = _labels(pred, truth)
    return float(np.mean(pred == truth))


def per_class_f1(pred, truth, n_classes: int) -> dict:
    """F1 for every class with nonzero support."""
    cm = confusion_matrix(pred, truth, n_classes)
    out = {}
    for c in range(n_classes):
        support = cm[c].sum()
        if support == 0:
            continue
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = support - tp
        out[c] = float(2 * tp / (2 * tp + fp + fn))
    return out


def macro_f1(pred, truth, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1 over classes present in ``truth``."""
    pred, truth = _labels(pred, truth)
    n = n_classes if n_classes is not None else int(max(pred.max(), truth.max())) + 1
    return float(np.mean(list(per_class_f1(pred, truth, n).values())))


# ------------------------------------------------------------------ baselines

def nn_baseline_material(test_specs, train_specs, train_labels, chunk=64) -> np.ndarray:
    """Label of the training spectrogram with the smallest mean squared difference (ties: lowest index)."""
    test = np.asarray(test_specs, dtype=np.float64)
    train = np.asarray(train_specs, dtype=np.float64)
    labels = np.asarray(train_labels)
    if len(train) == 0:
        raise ValueError("empty training set")
    if test.shape[1:] != train.shape[1:]:
        raise ValueError(f"spectrogram shapes differ: {test.shape[1:]} vs {train.shape[1:]}")
    flat_train = train.reshape(len(train), -1)
    out = np.empty(len(test), dtype=labels.dtype)
    for s in range(0, len(test), chunk):
        block = test[s:s + chunk].reshape(-1, 1, flat_train.shape[1])
        mse = ((block - flat_train[None]) ** 2).mean(axis=-1)
        out[s:s + chunk] = labels[mse.argmin(axis=1)]
    return out


def nn_baseline_shape(test_taps, train_taps, train_gt):
    """Ground truth of the training object whose tap cloud is CD-L1 closest; returns ``(index, cloud)``."""
    if len(train_taps) == 0:
        raise ValueError("empty training set")
    if len(train_taps) != len(train_gt):
        raise ValueError("one ground-truth cloud per training tap cloud required")
    dists = [chamfer(test_taps, t, "L1") for t in train_taps]
    k = int(np.argmin(dists))
    return k, train_gt[k]


def random_baseline(n_classes: int, truth, seed=0, trials=1000, metric="accuracy") -> dict:
    """Distribution of ``metric`` under uniformly random predictions."""
    if trials < 100:
        raise ValueError("random baseline needs at least 100 trials")
    truth = np.asarray(truth, dtype=np.int64)
    rng = np.random.default_rng(seed)
    fn = {"accuracy": lambda p: accuracy(p, truth),
          "macro_f1": lambda p: macro_f1(p, truth, n_classes)}[metric]
    values = np.array([fn(rng.integers(0, n_classes, truth.size)) for _ in range(trials)])
    sd = float(values.std(ddof=1))
    half = 1.96 * sd / np.sqrt(trials)
    return {"metric": metric, "mean": float(values.mean()), "sd": sd,
            "ci95": [float(values.mean() - half), float(values.mean() + half)], "trials": trials}


# ------------------------------------------------------------------ reports

def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    task: str
    metric: str
    value: float
    seed: int = 0
    config_hash: str = ""
    per_class: dict = field(default_factory=dict)
    confusion: list = field(default_factory=list)
    baselines: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def rows(self):
        """Long-format ``(task, seed, name, value)`` rows: the model first, then extras and baselines."""
        out = [(self.task, self.seed, self.metric, self.value)]
        out += [(self.task, self.seed, k, v) for k, v in sorted(self.extra.items()) if np.isscalar(v)]
        out += [(self.task, self.seed, f"baseline_{k}", v) for k, v in sorted(self.baselines.items())]
        return out

    def save(self, path) -> None:
        """Write ``<path>.json``, ``<path>.csv`` and, when present, ``<path>.confusion.csv``."""
        path = Path(path)
        path.with_suffix(".json").write_text(json.dumps(asdict(self), indent=1, default=float))
        write_rows(path.with_suffix(".csv"), self.rows())
        if self.confusion:
            with open(path.with_suffix(".confusion.csv"), "w", newline="") as fh:
                csv.writer(fh).writerows(self.confusion)

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text()))


def write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "seed", "name", "value"])
        w.writerows(rows)


def aggregate(reports) -> list:
    """Mean and sample sd per ``(task, name)`` over the given reports."""
    groups = {}
    for r in reports:
        for task, seed, name, value in r.rows():
            groups.setdefault((task, name), []).append(float(value))
    out = []
    for (task, name), values in sorted(groups.items()):
        v = np.array(values)
        out.append({"task": task, "name": name, "n": len(v), "mean": float(v.mean()),
                    "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0})
    return out
