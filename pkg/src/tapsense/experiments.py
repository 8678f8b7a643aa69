"""Desk-scale synthetic versions of the three perception experiments.

Every object is a random primitive mesh explored by the tapping policy;
each valid tap gets a synthesized recording, a strike clip and a Mel
spectrogram. The runners return plain dicts of metrics so they can be
compared across seeds and written as reports.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import balance_by_duplication, sample_reid, split_material, split_taps
from .dsp import mel_spectrogram, standardize, strike_clip
from .evaluation import macro_f1, nn_baseline_material, nn_baseline_shape, random_baseline
from .mesh import TriMesh, box, cone, cube, cup, cylinder, prism, pyramid, sphere
from .nn.models import MaterialNet, ReIDNet, ShapeNet
from .nn.training import ClassificationTask, ShapeTask, TrainConfig, train
from .shapes import augment_subsample, chamfer, normalize_cloud, sample_mesh_surface
from .simulator import PolicyConfig, add_contact_noise, run_policy
from .synth import MATERIALS, SynthConfig, synth_for_taps

log = logging.getLogger(__name__)

DTYPE = np.float32
CATEGORIES = ("cylinder", "cube", "box", "cone", "sphere", "pyramid", "prism", "cup")


def random_primitive(rng, category=None, material=0, name="object", size=(0.025, 0.06), height=(0.06, 0.18)) -> TriMesh:
    """A primitive of random size resting on the base plane, one material on every face."""
    category = category or CATEGORIES[rng.integers(len(CATEGORIES))]
    r = rng.uniform(*size)
    h = rng.uniform(*height)
    if category == "cylinder":
        m = cylinder(r, h)
    elif category == "cube":
        m = cube(2 * r)
    elif category == "box":
        m = box(2 * r, 2 * r * rng.uniform(0.6, 1.0), h)
    elif category == "cone":
        m = cone(r * 1.2, h)
    elif category == "sphere":
        m = sphere(r * 1.1)
    elif category == "pyramid":
        m = pyramid(2.2 * r, h, sides=int(rng.choice([3, 4])))
    elif category == "prism":
        m = prism(r * 1.2, h, sides=int(rng.choice([3, 5, 6])))
    elif category == "cup":
        m = cup(r, h)
    else:
        raise ValueError(f"unknown category {category!r}")
    m.face_material = np.full(len(m.faces), int(material), dtype=np.int64)
    m.name, m.category = name, category
    return m


@dataclass
class SimulatedObject:
    name: str
    mesh: TriMesh
    points: np.ndarray  # (n, 3) contact points of valid taps, metres
    specs: np.ndarray  # (n, 64, 64) Mel dB, float32
    labels: np.ndarray  # (n,) material id of each contact


def simulate_object(mesh: TriMesh, seed=0, policy=PolicyConfig(), synth=SynthConfig(), max_taps=None,
                    contact_noise=0.0, audio=True) -> SimulatedObject:
    """Policy run plus per-tap audio features; ``max_taps`` keeps a seeded random subset."""
    rng = np.random.default_rng(seed)
    records = [r for r in run_policy(mesh, policy) if r.v]
    if max_taps is not None and len(records) > max_taps:
        keep = np.sort(rng.choice(len(records), max_taps, replace=False))
        records = [records[k] for k in keep]
    labels = np.full(len(records), -1)
    specs = np.zeros((len(records), 64, 64), dtype=DTYPE)
    if audio:
        pairs = synth_for_taps(records, mesh, replace(synth, seed=seed))
        specs = np.stack([mel_spectrogram(strike_clip(w)).values for _, w in pairs]).astype(DTYPE)
        labels = np.array([int(mesh.face_material[0])] * len(pairs))
    if contact_noise > 0:
        records = add_contact_noise(records, contact_noise, seed)
    points = np.array([r.point for r in records]).reshape(-1, 3)
    return SimulatedObject(mesh.name, mesh, points, specs, labels)


def net_input(specs):
    return np.stack([standardize(s) for s in specs]).astype(DTYPE)[:, None]


# ------------------------------------------------------------------ material

@dataclass(frozen=True)
class MaterialSetup:
    materials: tuple = ("plastic", "glass", "wood", "metal", "foam")
    objects_per_class: int = 10
    strikes_per_object: int = 20
    data_seed: int = 0
    train: TrainConfig = TrainConfig("sgd", 0.00903, 0.1, 200, 36, 40, 0.52105)


def build_material_objects(setup: MaterialSetup = MaterialSetup()) -> list:
    rng = np.random.default_rng(setup.data_seed)
    objects = []
    for name in setup.materials:
        mat = MATERIALS.index(name)
        for k in range(setup.objects_per_class):
            mesh = random_primitive(rng, material=mat, name=f"{name}{k:02d}",
                                    size=(0.03, 0.06), height=(0.08, 0.18))
            seed = int(rng.integers(2**31))
            objects.append(simulate_object(mesh, seed, max_taps=setup.strikes_per_object))
    return objects


def _gather(objects, names):
    keep = [o for o in objects if o.name in set(names)]
    return np.concatenate([o.specs for o in keep]), np.concatenate([o.labels for o in keep])


def run_material(objects, seed=0, setup: MaterialSetup = MaterialSetup()) -> dict:
    """Object-disjoint split per class, train, and compare with the NN and random baselines."""
    by_class = {}
    for o in objects:
        by_class.setdefault(int(o.labels[0]), []).append(o.name)
    train_ids, val_ids, test_ids = [], [], []
    for c in sorted(by_class):
        s = split_material(by_class[c], seed=seed * 1000 + c)
        train_ids += s.train
        val_ids += s.val
        test_ids += s.test
    xtr, ytr = _gather(objects, train_ids)
    xva, yva = _gather(objects, val_ids)
    xte, yte = _gather(objects, test_ids)
    order = balance_by_duplication(range(len(ytr)), lambda k: int(ytr[k]), seed)
    xtr, ytr = xtr[order], ytr[order]

    model = MaterialNet(dropout=setup.train.dropout, seed=seed, dtype=DTYPE)
    task = ClassificationTask(net_input(xtr), ytr, net_input(xva), yva)
    result = train(model, task, replace(setup.train, seed=seed))
    model.eval()
    pred = task.predict(model, net_input(xte))
    nn_pred = nn_baseline_material(xte, xtr, ytr)
    present = sorted(set(ytr.tolist()))
    return {
        "seed": seed,
        "model_f1": macro_f1(pred, yte, len(MATERIALS)),
        "nn_f1": macro_f1(nn_pred, yte, len(MATERIALS)),
        # the random baseline guesses among the classes the model was trained on
        "random_f1": random_baseline(len(present), np.searchsorted(present, yte), seed, 1000, "macro_f1")["mean"],
        "best_epoch": result.best_epoch,
        "best_val_accuracy": result.best_metric,
        "n_train": len(ytr), "n_test": len(yte),
        "pred": pred.tolist(), "truth": yte.tolist(),
    }


# ------------------------------------------------------------------ shape

@dataclass(frozen=True)
class ShapeSetup:
    n_train: int = 30
    n_test: int = 6
    gt_points: int = 5000
    target_points: int = 1024
    copies: int = 12
    contact_noise: float = 0.001
    data_seed: int = 0
    train: TrainConfig = TrainConfig("adam", 5e-4, 0.7, 10, 16, 20, 0.0)


def build_shape_objects(setup: ShapeSetup = ShapeSetup()) -> list:
    rng = np.random.default_rng(setup.data_seed)
    n = setup.n_train + setup.n_test
    out = []
    for k in range(n):
        mesh = random_primitive(rng, category=CATEGORIES[k % len(CATEGORIES)], name=f"shape{k:02d}")
        seed = int(rng.integers(2**31))
        obj = simulate_object(mesh, seed, contact_noise=setup.contact_noise, audio=False)
        gt = sample_mesh_surface(mesh, setup.gt_points, seed).points
        out.append((obj, gt))
    return out


def normalized_pair(taps, gt, n_target, rng):
    x, center, scale = normalize_cloud(taps)
    target = (gt[rng.choice(len(gt), min(n_target, len(gt)), replace=False)] - center) / scale
    return x, target, center, scale


def run_shape(objects, seed=0, setup: ShapeSetup = ShapeSetup()) -> dict:
    """Train on ``n_train`` objects, report mean CD-L1 (m) on the rest against the NN baseline."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(objects))
    train_objs = [objects[k] for k in order[:setup.n_train]]
    test_objs = [objects[k] for k in order[setup.n_train:setup.n_train + setup.n_test]]

    items, val, val_scales = [], [], []
    for k, (obj, gt) in enumerate(train_objs):
        for c in augment_subsample(obj.points, copies=setup.copies, seed=seed * 100000 + k):
            x, t, _, _ = normalized_pair(c.points, gt, setup.target_points, rng)
            items.append((x.astype(DTYPE), t))
        # validation: one extra subsample per training object, scored against the full ground truth
        c = augment_subsample(obj.points, copies=1, seed=seed * 100000 + 50000 + k)[0]
        x, center, scale = normalize_cloud(c.points)
        val.append((x.astype(DTYPE), (gt - center) / scale))
        val_scales.append(scale)

    model = ShapeNet(seed=seed, dtype=DTYPE)
    task = ShapeTask(items, val, val_scales)
    result = train(model, task, replace(setup.train, seed=seed))
    model.eval()

    model_cd, nn_cd = [], []
    train_taps = [o.points for o, _ in train_objs]
    train_gt = [gt for _, gt in train_objs]
    for obj, gt in test_objs:
        x, center, scale = normalize_cloud(obj.points)
        pred = task.predict(model, [x])[0].astype(np.float64) * scale + center
        model_cd.append(chamfer(pred, gt, "L1"))
        _, nn_gt = nn_baseline_shape(obj.points, train_taps, train_gt)
        nn_cd.append(chamfer(nn_gt, gt, "L1"))
    return {
        "seed": seed,
        "model_cd_l1": float(np.mean(model_cd)),
        "nn_cd_l1": float(np.mean(nn_cd)),
        "per_object_model": [float(v) for v in model_cd],
        "per_object_nn": [float(v) for v in nn_cd],
        "test_objects": [o.name for o, _ in test_objs],
        "best_epoch": result.best_epoch,
    }


# ------------------------------------------------------------------ re-identification

@dataclass(frozen=True)
class ReIDSetup:
    n_geometries: int = 5
    materials: tuple = ("plastic", "glass", "wood", "metal", "ceramic")
    train_draws: int = 120
    eval_draws: int = 50
    contact_noise: float = 0.002
    data_seed: int = 0
    point_scale: float = 0.15
    train: TrainConfig = TrainConfig("adam", 5e-4, 0.5, 10, 32, 20, 0.2348)


def build_reid_objects(setup: ReIDSetup = ReIDSetup()) -> list:
    """Ten objects: each geometry appears twice with different materials and each
    material on two geometries, so neither modality alone separates every pair."""
    rng = np.random.default_rng(setup.data_seed)
    geoms = []
    for g in range(setup.n_geometries):
        cat = ("cylinder", "box", "prism", "cup", "cone")[g % 5]
        geoms.append((cat, rng.uniform(0.035, 0.06), rng.uniform(0.10, 0.16)))
    out = []
    for g, (cat, r, h) in enumerate(geoms):
        for j in range(2):
            mat = setup.materials[(g + j) % len(setup.materials)]
            geo_rng = np.random.default_rng([setup.data_seed, g])
            mesh = random_primitive(geo_rng, cat, MATERIALS.index(mat), f"{cat}-{mat}", size=(r, r), height=(h, h))
            out.append(simulate_object(mesh, int(rng.integers(2**31)), contact_noise=setup.contact_noise))
    return out


class TapSamples:
    """Lazily gathered 15-tap samples: row ``k`` indexes taps of object ``owner[k]``."""

    def __init__(self, specs, points, owner, taps, point_scale):
        self.specs, self.points, self.owner, self.taps = specs, points, owner, taps
        self.point_scale = point_scale

    def __len__(self):
        return len(self.owner)

    def take(self, idx):
        s = np.stack([self.specs[self.owner[k]][self.taps[k]] for k in idx])
        p = np.stack([self.points[self.owner[k]][self.taps[k]] for k in idx]) / self.point_scale
        return s.astype(DTYPE), p.astype(DTYPE)


def _reid_split(objects, setup, seed):
    parts = {"train": ([], []), "val": ([], []), "test": ([], [])}
    for k, o in enumerate(objects):
        tr, va, te = split_taps(np.arange(len(o.points)), seed=seed * 1000 + k)
        for j, (name, taps, draws) in enumerate((("train", tr, setup.train_draws), ("val", va, setup.eval_draws),
                                                 ("test", te, setup.eval_draws))):
            s = sample_reid(taps, draws=draws, seed=[seed, k, j], name=o.name)
            if s is None:
                continue
            parts[name][0].extend([k] * len(s))
            parts[name][1].extend(list(s))
    return parts


def run_reid(objects, seed=0, setup: ReIDSetup = ReIDSetup(), modes=("fused", "audio", "points")) -> dict:
    specs = [np.stack([standardize(s) for s in o.specs]).astype(DTYPE) for o in objects]
    points = [o.points for o in objects]
    parts = _reid_split(objects, setup, seed)
    sets = {name: (TapSamples(specs, points, np.array(own), taps, setup.point_scale), np.array(own))
            for name, (own, taps) in parts.items()}
    out = {"seed": seed, "n_objects": len(objects), "n_train": len(sets["train"][1])}
    for mode in modes:
        model = ReIDNet(n_objects=len(objects), mode=mode, dropout=setup.train.dropout, seed=seed, dtype=DTYPE)
        task = ClassificationTask(sets["train"][0], sets["train"][1], sets["val"][0], sets["val"][1])
        result = train(model, task, replace(setup.train, seed=seed))
        model.eval()
        pred = task.predict(model, sets["test"][0])
        out[f"{mode}_accuracy"] = float(np.mean(pred == sets["test"][1]))
        out[f"{mode}_best_epoch"] = result.best_epoch
    return out
