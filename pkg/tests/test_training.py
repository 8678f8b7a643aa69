import numpy as np
import pytest
from hypothesis import given, strategies as st

from tapsense.data import DatasetError, blend_fraction, synthetic_only
from tapsense.nn.models import MaterialNet, ShapeNet
from tapsense.nn.optim import SGD, Adam, step_decay
from tapsense.nn.tensor import Tensor
from tapsense.nn.training import (MATERIAL_TRAIN, REID_TRAIN, SHAPE_TRAIN, ClassificationTask, ShapeTask,
                                  TrainConfig, TrainingDiverged, train)

# rows of the synthetic/real blending table: (first epoch, last epoch, synthetic fraction)
BLEND_ROWS = [(0, 100, 1.0), (100, 200, 0.9), (200, 300, 0.8), (300, 400, 0.6), (400, 500, 0.4),
              (500, 600, 0.2), (600, 700, 0.1), (700, 800, 0.05), (800, 1000, 0.0)]


def test_presets_match_tables():
    assert (MATERIAL_TRAIN.optimizer, MATERIAL_TRAIN.lr, MATERIAL_TRAIN.batch_size) == ("sgd", 0.00903, 36)
    assert (MATERIAL_TRAIN.decay_factor, MATERIAL_TRAIN.decay_period, MATERIAL_TRAIN.dropout) == (0.1, 200, 0.52105)
    assert (SHAPE_TRAIN.optimizer, SHAPE_TRAIN.lr, SHAPE_TRAIN.decay_factor, SHAPE_TRAIN.decay_period) == \
        ("adam", 5e-6, 0.7, 500)
    assert (REID_TRAIN.lr, REID_TRAIN.dropout) == (3.6515e-5, 0.2348)


@given(lr=st.floats(1e-6, 1.0), factor=st.floats(0.01, 1.0), period=st.integers(1, 500), epoch=st.integers(0, 5000))
def test_step_decay_exact(lr, factor, period, epoch):
    assert step_decay(lr, factor, period, epoch) == lr * factor ** (epoch // period)


def test_step_decay_examples():
    assert MATERIAL_TRAIN.lr_at(199) == 0.00903
    assert MATERIAL_TRAIN.lr_at(200) == 0.00903 * 0.1
    assert SHAPE_TRAIN.lr_at(999) == 5e-6 * 0.7


def test_blend_table_rows():
    for lo, hi, frac in BLEND_ROWS:
        for epoch in range(lo, hi):
            assert blend_fraction(epoch) == frac
    assert blend_fraction(50) == 1.0 and blend_fraction(450) == 0.4
    for bad in (-1, 1000):
        with pytest.raises(DatasetError):
            blend_fraction(bad)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    assert MATERIAL_TRAIN.with_overrides(max_epochs=3).max_epochs == 3


def test_optimizers_descend_quadratic():
    for make in (lambda p: SGD(p, 0.1, momentum=0.9), lambda p: Adam(p, 0.1)):
        w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        opt = make([w])
        for _ in range(200):
            w.grad = 2 * w.data
            opt.step()
        assert np.linalg.norm(w.data) < 1e-2


def toy_specs(n, seed):
    """Class 0 bright in the low rows, class 1 bright in the high rows."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.3, (n, 64, 64))
    y = np.arange(n) % 2
    x[y == 0, :20] += 1.0
    x[y == 1, 44:] += 1.0
    return x, y


def test_toy_material_training():
    x, y = toy_specs(24, 0)
    vx, vy = toy_specs(8, 1)
    net = MaterialNet(n_classes=2, dropout=0.0, seed=0)
    res = train(net, ClassificationTask(x, y, vx, vy), TrainConfig("sgd", 0.01, 1.0, 1, 8, 50, 0.0))
    assert res.history[-1].train_loss < res.history[0].train_loss
    assert np.mean(ClassificationTask(x, y, vx, vy).predict(net.eval(), (x,)) == y) >= 0.95


def test_training_reproducible(tmp_path):
    x, y = toy_specs(12, 2)
    runs = []
    for _ in range(2):
        net = MaterialNet(n_classes=2, dropout=0.3, seed=4)
        res = train(net, ClassificationTask(x, y, x, y), TrainConfig("adam", 1e-3, 1.0, 1, 4, 3, 0.3, seed=9),
                    metrics_path=tmp_path / "m.csv")
        runs.append((res, net.state_dict()))
    assert [m.train_loss for m in runs[0][0].history] == [m.train_loss for m in runs[1][0].history]
    assert all(np.array_equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("epoch,lr,train_loss") and len(lines) == 4


def test_nan_loss_aborts():
    x, y = toy_specs(4, 3)
    x[0, 0, 0] = np.nan
    with pytest.raises(TrainingDiverged, match="epoch 0, batch 0"):
        train(MaterialNet(n_classes=2, seed=0), ClassificationTask(x, y, x, y), TrainConfig(batch_size=4))


def test_classification_rejects_blend_and_empty():
    x, y = toy_specs(4, 3)
    with pytest.raises(ValueError):
        ClassificationTask(x, y, x[:0], y[:0])
    with pytest.raises(ValueError):
        train(MaterialNet(n_classes=2), ClassificationTask(x, y, x, y), TrainConfig(max_epochs=1),
              blend=synthetic_only)


def test_shape_task_blend_and_training():
    rng = np.random.default_rng(0)
    pairs = [(rng.normal(size=(int(rng.integers(8, 12)), 3)), rng.normal(size=(30, 3))) for _ in range(6)]
    task = ShapeTask(pairs[:4], pairs[4:], epoch_size=8)
    items, frac = task.epoch_items(0, rng, synthetic_only)
    assert frac == 1.0 and len(items) == 8 and max(items) < 4
    with pytest.raises(ValueError):
        task.epoch_items(900, rng, blend_fraction)
    net = ShapeNet(n_points=30, widths=(8, 8, 16, 16), hidden=16, seed=0)
    res = train(net, task, TrainConfig("adam", 1e-3, 1.0, 1, 4, 3), blend=synthetic_only)
    assert [m.synthetic_fraction for m in res.history] == [1.0] * 3
    assert res.best_metric == max(m.val_metric for m in res.history)
