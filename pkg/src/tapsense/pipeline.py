"""Dataset-level stages behind the command line: simulate, extract, features, train, eval, refine, report.

Stages communicate only through files under a dataset root and an output
directory, so each one can be rerun on its own. Every stage writes a
provenance record (config, seed, input hashes) to ``<out>/provenance/``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import (DatasetError, ObjectRecord, SplitSpec, assign_material_labels, balance_by_duplication,
                   blend_fraction, load_dataset, sample_reid, split_material, split_taps, synthetic_only)
from .descriptors import descriptors, rescale_unit, separability, write_features_csv
from .dsp import load_spectrogram, mel_spectrogram, read_wav, save_spectrogram, standardize, strike_clip, write_wav
from .evaluation import (EvalReport, aggregate, config_hash, confusion_matrix, macro_f1, nn_baseline_material,
                         nn_baseline_shape, per_class_f1, random_baseline)
from .experiments import CATEGORIES, DTYPE, TapSamples, net_input, normalized_pair, random_primitive
from .mesh import assign_materials_by_height, read_mesh, write_obj
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.models import N_MATERIAL_CLASSES, REID_MODES, MaterialNet, ReIDNet, ShapeNet
from .nn.training import MATERIAL_TRAIN, REID_TRAIN, ClassificationTask, ShapeTask, TrainConfig, train
from .refine import RefineConfig, refine_detailed
from .shapes import PointCloud, augment_subsample, chamfer, normalize_cloud, read_xyz, sample_mesh_surface, write_xyz
from .simulator import PolicyConfig, add_contact_noise, explore, export_taps
from .synth import MATERIALS, SynthConfig, synth_for_taps

log = logging.getLogger(__name__)

TASKS = ("material", "shape", "reid")


class StageError(RuntimeError):
    """A stage cannot run, usually because an upstream stage has not produced its outputs."""


# ------------------------------------------------------------------ configuration

@dataclass
class RunConfig:
    root: str = ""
    out: str = "runs"
    seed: int = 0
    task: str = "material"
    jobs: int = 1
    epochs: int | None = None
    baselines: str = "all"
    meshes: str = ""
    primitives: int = 10
    materials: list = field(default_factory=lambda: ["plastic", "glass", "wood", "metal", "ceramic"])
    contact_noise: float = 0.002
    gt_points: int = 5000
    max_taps: int | None = None
    copies: int = 12
    target_points: int = 1024
    reid_draws: list = field(default_factory=lambda: [120, 50])
    reid_modes: list = field(default_factory=lambda: list(REID_MODES))
    point_scale: float = 0.15
    policy: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    refine: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.baselines not in ("all", "nn", "random", "none"):
            raise ValueError("baselines must be all, nn, random or none")
        unknown = [m for m in self.materials if m not in MATERIALS]
        if unknown:
            raise ValueError(f"unknown materials {unknown}")
        bad = set(self.reid_modes) - set(REID_MODES)
        if bad:
            raise ValueError(f"unknown re-id modes {sorted(bad)}")
        # fail early on bad nested settings
        self.policy_config()
        self.synth_config()
        self.refine_config()
        self.train_config("material")

    @classmethod
    def load(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"unknown config keys {unknown}")
        return cls(**data)

    def digest(self) -> str:
        # Where a run lives and how many workers it used never change its numbers.
        settings = {k: v for k, v in asdict(self).items() if k not in ("root", "out", "meshes", "jobs")}
        return config_hash(settings)

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(**self.policy)

    def synth_config(self) -> SynthConfig:
        return replace(SynthConfig(**self.synth), seed=self.seed)

    def refine_config(self) -> RefineConfig:
        return RefineConfig(**self.refine)

    def train_config(self, task) -> TrainConfig:
        base = {"material": MATERIAL_TRAIN.with_overrides(max_epochs=40),
                "shape": TrainConfig("adam", 5e-4, 0.7, 10, 16, 40, 0.0),
                "reid": REID_TRAIN.with_overrides(lr=5e-4, decay_factor=0.5, decay_period=10, batch_size=32,
                                                  max_epochs=20)}[task]
        cfg = base.with_overrides(**self.train, seed=self.seed)
        return cfg.with_overrides(max_epochs=self.epochs) if self.epochs else cfg


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_provenance(out, stage, cfg: RunConfig, inputs=(), outputs=()) -> Path:
    """``<out>/provenance/<stage>.json``: merged config, seed, input hashes, outputs."""
    path = Path(out) / "provenance" / f"{stage}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {"stage": stage, "seed": cfg.seed, "config": asdict(cfg), "config_hash": cfg.digest(),
              "inputs": {str(p): _sha(p) for p in inputs if Path(p).is_file()},
              "outputs": [str(p) for p in outputs], "time": time.strftime("%Y-%m-%dT%H:%M:%S")}
    path.write_text(json.dumps(record, indent=1))
    return path


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------ simulate

def _primitives(cfg: RunConfig) -> list:
    """Random primitives; every other object is split in two materials by height."""
    rng = np.random.default_rng([cfg.seed, 1])
    out = []
    for k in range(cfg.primitives):
        a, b = rng.choice(len(cfg.materials), 2, replace=False)
        mat_a, mat_b = MATERIALS.index(cfg.materials[a]), MATERIALS.index(cfg.materials[b])
        mesh = random_primitive(rng, CATEGORIES[k % len(CATEGORIES)], mat_a, f"obj{k:03d}")
        if k % 2:
            assign_materials_by_height(mesh, 0.5 * mesh.height(), mat_a, mat_b)
        out.append(mesh)
    return out


def _simulate_one(args):
    mesh, k, root, cfg = args
    base = Path(root) / "objects" / mesh.name
    (base / "audio").mkdir(parents=True, exist_ok=True)
    seed = int(np.random.default_rng([cfg.seed, 2, k]).integers(2**31))
    run = explore(mesh, cfg.policy_config())
    records = run.records
    valid = [r for r in records if r.v]
    if cfg.max_taps is not None and len(valid) > cfg.max_taps:
        keep = set(np.random.default_rng(seed).choice([r.i for r in valid], cfg.max_taps, replace=False).tolist())
        records = [r for r in records if not r.v or r.i in keep]
    heard = {}
    for rec, w in synth_for_taps(records, mesh, replace(cfg.synth_config(), seed=seed)):
        write_wav(base / "audio" / f"{rec.i}.wav", w)
        heard[rec.i] = rec.a
    exported = [replace(r, a=heard.get(r.i, False)) for r in records]
    if cfg.contact_noise > 0:
        exported = add_contact_noise(exported, cfg.contact_noise, seed)
    export_taps(exported, base / "taps.txt")
    write_xyz(base / "gt.xyz", sample_mesh_surface(mesh, cfg.gt_points, seed))
    write_obj(base / "mesh.obj", mesh)
    return {"id": mesh.name, "category": mesh.category, "synthetic": True, "seed": seed,
            "taps": len(records), "valid": sum(r.v for r in records),
            "materials": sorted(MATERIALS[m] for m in set(mesh.face_material.tolist()))}


def simulate(cfg: RunConfig) -> list:
    """Explore every mesh, synthesize audio and write the dataset tree under ``cfg.root``."""
    root = Path(cfg.root)
    if cfg.meshes:
        mesh_dir = Path(cfg.meshes)
        if not mesh_dir.is_dir():
            raise StageError(f"mesh directory {mesh_dir} does not exist")
        paths = sorted(p for p in mesh_dir.iterdir() if p.suffix.lower() in (".obj", ".ply"))
        if not paths:
            raise StageError(f"no .obj or .ply meshes in {mesh_dir}")
        meshes = [read_mesh(p) for p in paths]
        for m, p in zip(meshes, paths):
            m.name = p.stem
    else:
        meshes = _primitives(cfg)
    root.mkdir(parents=True, exist_ok=True)
    entries = _map(_simulate_one, [(m, k, str(root), cfg) for k, m in enumerate(meshes)], cfg.jobs)
    manifest = {"seed": cfg.seed, "objects": entries, "exclude": []}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    write_provenance(root, "simulate", cfg, [p for p in (Path(cfg.meshes).glob("*") if cfg.meshes else [])],
                     [root / "manifest.json"])
    return entries


# ------------------------------------------------------------------ extract / features

def _extract_one(args):
    root, record = args
    spec_dir = Path(root) / "objects" / record.object_id / "spec"
    spec_dir.mkdir(exist_ok=True)
    for i, path in sorted(record.clip_paths.items()):
        save_spectrogram(spec_dir / f"{i}.f32", mel_spectrogram(strike_clip(read_wav(path))))
    return len(record.clip_paths)


def extract(cfg: RunConfig) -> int:
    """Strike clip and Mel spectrogram for every recording."""
    records = _records(cfg)
    n = sum(_map(_extract_one, [(cfg.root, r) for r in records], cfg.jobs))
    write_provenance(cfg.root, "extract", cfg, [Path(cfg.root) / "manifest.json"])
    return n


def _records(cfg: RunConfig) -> list:
    if not cfg.root:
        raise StageError("no dataset root: pass --root or set SONIC_DATA_ROOT")
    try:
        return load_dataset(cfg.root)
    except DatasetError as exc:
        raise StageError(str(exc)) from exc


def tap_labels(record: ObjectRecord) -> tuple:
    """Valid tap indices and their material labels taken from the annotated cloud."""
    taps = [r for r in record.taps if r.v]
    labels = assign_material_labels(np.array([r.point for r in taps]).reshape(-1, 3), record.gt_cloud)
    return [r.i for r in taps], labels


def features(cfg: RunConfig) -> dict:
    """D1..D12 per recording, written to ``<out>/features.csv`` with a separability summary."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, ids, labels = [], [], []
    for rec in _records(cfg):
        idx, lab = tap_labels(rec)
        for i, label in zip(idx, lab):
            rows.append(descriptors(strike_clip(read_wav(rec.clip_paths[i]))))
            ids.append(f"{rec.object_id}/{i}")
            labels.append(int(label))
    if not rows:
        raise StageError("no recordings to describe")
    write_features_csv(out / "features.csv", np.array(rows), ids)
    summary = {"n": len(rows), "classes": sorted(MATERIALS[k] for k in set(labels))}
    if len(set(labels)) > 1:
        sep = separability(rescale_unit(np.array(rows)), labels)
        summary["silhouette"] = sep["silhouette"]
    (out / "features_summary.json").write_text(json.dumps(summary, indent=1))
    write_provenance(out, "features", cfg, [Path(cfg.root) / "manifest.json"], [out / "features.csv"])
    return summary


# ------------------------------------------------------------------ shared data access

def _load_specs(cfg, record, taps):
    spec_dir = Path(cfg.root) / "objects" / record.object_id / "spec"
    if not spec_dir.is_dir():
        raise StageError(f"{record.object_id}: no spectrograms; run the extract stage first")
    return np.stack([load_spectrogram(spec_dir / f"{i}.f32").values for i in taps]).astype(DTYPE)


def _split(cfg: RunConfig, records, task) -> SplitSpec:
    path = Path(cfg.out) / "splits" / f"{task}-seed{cfg.seed}.json"
    if path.exists():
        return SplitSpec.load(path)
    split = split_material([r.object_id for r in records], seed=cfg.seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    split.save(path)
    return split


def _ckpt(cfg, name):
    return Path(cfg.out) / f"{name}-seed{cfg.seed}.ckpt"


def _material_arrays(cfg, records, ids):
    by_id = {r.object_id: r for r in records}
    specs, labels, owners = [], [], []
    for oid in ids:
        taps, lab = tap_labels(by_id[oid])
        if not taps:
            continue
        specs.append(_load_specs(cfg, by_id[oid], taps))
        labels.append(lab)
        owners += [oid] * len(taps)
    if not specs:
        raise StageError("split partition has no valid taps")
    return np.concatenate(specs), np.concatenate(labels), owners


def _shape_items(cfg, records, ids, rng):
    by_id = {r.object_id: r for r in records}
    items, val, scales = [], [], []
    for k, oid in enumerate(ids):
        rec = by_id[oid]
        pts, gt = rec.contact_points(), rec.gt_cloud.points
        for c in augment_subsample(pts, copies=cfg.copies, seed=cfg.seed * 100000 + k):
            x, t, _, _ = normalized_pair(c.points, gt, cfg.target_points, rng)
            items.append((x.astype(DTYPE), t))
        c = augment_subsample(pts, copies=1, seed=cfg.seed * 100000 + 50000 + k)[0]
        x, center, scale = normalize_cloud(c.points)
        val.append((x.astype(DTYPE), (gt - center) / scale))
        scales.append(scale)
    return items, val, scales


def _reid_sets(cfg, records):
    specs, points, parts = [], [], {"train": ([], []), "val": ([], []), "test": ([], [])}
    train_draws, eval_draws = cfg.reid_draws
    for k, rec in enumerate(records):
        taps = [r.i for r in rec.taps if r.v]
        specs.append(np.stack([standardize(s) for s in _load_specs(cfg, rec, taps)]).astype(DTYPE))
        points.append(rec.contact_points())
        split = split_taps(np.arange(len(taps)), seed=cfg.seed * 1000 + k)
        for j, (name, rows, draws) in enumerate(zip(("train", "val", "test"), split,
                                                    (train_draws, eval_draws, eval_draws))):
            s = sample_reid(rows, draws=draws, seed=[cfg.seed, k, j], name=rec.object_id)
            if s is not None:
                parts[name][0].extend([k] * len(s))
                parts[name][1].extend(list(s))
    out = {}
    for name, (owner, taps) in parts.items():
        if not owner:
            raise StageError(f"no object has 15 taps in its {name} partition")
        out[name] = (TapSamples(specs, points, np.array(owner), taps, cfg.point_scale), np.array(owner))
    return out


# ------------------------------------------------------------------ train

def train_stage(cfg: RunConfig) -> dict:
    records = _records(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config(cfg.task)
    summary = {"task": cfg.task, "seed": cfg.seed, "train": asdict(tcfg)}
    if cfg.task == "material":
        split = _split(cfg, records, "material")
        xtr, ytr, _ = _material_arrays(cfg, records, split.train)
        xva, yva, _ = _material_arrays(cfg, records, split.val)
        order = balance_by_duplication(range(len(ytr)), lambda k: int(ytr[k]), cfg.seed)
        model = MaterialNet(N_MATERIAL_CLASSES, tcfg.dropout, cfg.seed, DTYPE)
        res = train(model, ClassificationTask(net_input(xtr[order]), ytr[order], net_input(xva), yva), tcfg,
                    metrics_path=out / f"material-seed{cfg.seed}.metrics.csv")
        save_checkpoint(_ckpt(cfg, "material"), model, res.best_epoch, res.best_metric, {"task": "material"})
        summary.update(best_epoch=res.best_epoch, best_val_accuracy=res.best_metric)
    elif cfg.task == "shape":
        split = _split(cfg, records, "shape")
        by_id = {r.object_id: r for r in records}
        rng = np.random.default_rng(cfg.seed)
        real = [oid for oid in split.train if not by_id[oid].is_synthetic]
        syn = [oid for oid in split.train if by_id[oid].is_synthetic]
        items, val, scales = _shape_items(cfg, records, syn, rng)
        real_items = _shape_items(cfg, records, real, rng)[0] if real else []
        if not val:
            val, scales = _shape_items(cfg, records, real, rng)[1:]
        blend = blend_fraction if real and syn else synthetic_only if syn else (lambda epoch: 0.0)
        model = ShapeNet(seed=cfg.seed, dtype=DTYPE)
        res = train(model, ShapeTask(items, val, scales, real_items, epoch_size=len(items) + len(real_items)), tcfg,
                    blend=blend, metrics_path=out / f"shape-seed{cfg.seed}.metrics.csv")
        save_checkpoint(_ckpt(cfg, "shape"), model, res.best_epoch, res.best_metric, {"task": "shape"})
        summary.update(best_epoch=res.best_epoch, best_val_cd_l1=-res.best_metric)
    else:
        sets = _reid_sets(cfg, records)
        for mode in cfg.reid_modes:
            model = ReIDNet(len(records), mode=mode, dropout=tcfg.dropout, seed=cfg.seed, dtype=DTYPE)
            res = train(model, ClassificationTask(*sets["train"], *sets["val"]), tcfg,
                        metrics_path=out / f"reid-{mode}-seed{cfg.seed}.metrics.csv")
            save_checkpoint(_ckpt(cfg, f"reid-{mode}"), model, res.best_epoch, res.best_metric,
                            {"task": "reid", "mode": mode, "objects": [r.object_id for r in records]})
            summary[f"{mode}_best_val_accuracy"] = res.best_metric
    write_provenance(out, f"train-{cfg.task}-seed{cfg.seed}", cfg, [Path(cfg.root) / "manifest.json"])
    return summary


# ------------------------------------------------------------------ eval

def _require(path):
    if not Path(path).exists():
        raise StageError(f"{path} missing; run the train stage first")
    return path


def eval_stage(cfg: RunConfig) -> EvalReport:
    records = _records(cfg)
    out = Path(cfg.out)
    pred_dir = out / "predictions" / f"{cfg.task}-seed{cfg.seed}"
    pred_dir.mkdir(parents=True, exist_ok=True)
    want_nn = cfg.baselines in ("all", "nn")
    want_random = cfg.baselines in ("all", "random")
    chash = cfg.digest()
    by_id = {r.object_id: r for r in records}
    baselines, extra = {}, {}

    if cfg.task == "material":
        model = MaterialNet(N_MATERIAL_CLASSES, 0.0, 0, DTYPE)
        load_checkpoint(_require(_ckpt(cfg, "material")), model)
        model.eval()
        split = _split(cfg, records, "material")
        xte, yte, owners = _material_arrays(cfg, records, split.test)
        task = ClassificationTask(net_input(xte[:1]), yte[:1], net_input(xte[:1]), yte[:1])
        pred = task.predict(model, net_input(xte))
        refined = pred.copy()
        owners = np.array(owners)
        rcfg = cfg.refine_config()
        for oid in split.test:
            rows = np.flatnonzero(owners == oid)
            if not len(rows):
                continue
            pts = by_id[oid].contact_points()
            write_xyz(pred_dir / f"{oid}.xyz", PointCloud(pts, pred[rows]))
            write_xyz(pred_dir / f"{oid}.truth.xyz", PointCloud(pts, yte[rows]))
            if np.bincount(pred[rows]).max() >= rcfg.min_occurrence:
                refined[rows] = refine_detailed(pts, pred[rows], rcfg).labels
        value = macro_f1(pred, yte, N_MATERIAL_CLASSES)
        extra["refined_f1"] = macro_f1(refined, yte, N_MATERIAL_CLASSES)
        if want_nn:
            xtr, ytr, _ = _material_arrays(cfg, records, split.train)
            baselines["nn_f1"] = macro_f1(nn_baseline_material(xte, xtr, ytr), yte, N_MATERIAL_CLASSES)
        if want_random:
            baselines["random_f1"] = random_baseline(N_MATERIAL_CLASSES, yte, cfg.seed, 1000, "macro_f1")["mean"]
        report = EvalReport("material", "macro_f1", value, cfg.seed, chash,
                            {MATERIALS[k]: v for k, v in per_class_f1(pred, yte, N_MATERIAL_CLASSES).items()},
                            confusion_matrix(pred, yte, N_MATERIAL_CLASSES).tolist(), baselines, extra)
    elif cfg.task == "shape":
        model = ShapeNet(seed=0, dtype=DTYPE)
        load_checkpoint(_require(_ckpt(cfg, "shape")), model)
        model.eval()
        split = _split(cfg, records, "shape")
        train_taps = [by_id[o].contact_points() for o in split.train]
        train_gt = [by_id[o].gt_cloud.points for o in split.train]
        cds, nn_cds = {}, {}
        for oid in split.test:
            rec = by_id[oid]
            x, center, scale = normalize_cloud(rec.contact_points())
            pred = model(x.astype(DTYPE)[None]).data[0].astype(np.float64) * scale + center
            write_xyz(pred_dir / f"{oid}.pred.xyz", PointCloud(pred))
            cds[oid] = chamfer(pred, rec.gt_cloud.points, "L1")
            if want_nn:
                _, gt = nn_baseline_shape(rec.contact_points(), train_taps, train_gt)
                nn_cds[oid] = chamfer(gt, rec.gt_cloud.points, "L1")
        if nn_cds:
            baselines["nn_cd_l1"] = float(np.mean(list(nn_cds.values())))
        report = EvalReport("shape", "cd_l1", float(np.mean(list(cds.values()))), cfg.seed, chash, cds,
                            baselines=baselines, extra={"nn_per_object": nn_cds})
    else:
        sets = _reid_sets(cfg, records)
        accs = {}
        for mode in cfg.reid_modes:
            model = ReIDNet(len(records), mode=mode, dropout=0.0, seed=0, dtype=DTYPE)
            load_checkpoint(_require(_ckpt(cfg, f"reid-{mode}")), model)
            model.eval()
            task = ClassificationTask(*sets["test"], *sets["test"])
            accs[mode] = float(np.mean(task.predict(model, sets["test"][0]) == sets["test"][1]))
        if want_random:
            baselines["random_accuracy"] = random_baseline(len(records), sets["test"][1], cfg.seed, 1000)["mean"]
        main = "fused" if "fused" in accs else next(iter(accs))
        report = EvalReport("reid", f"{main}_accuracy", accs[main], cfg.seed, chash, baselines=baselines,
                            extra={f"{m}_accuracy": v for m, v in accs.items() if m != main})
    report.save(out / f"eval-{cfg.task}-seed{cfg.seed}")
    write_provenance(out, f"eval-{cfg.task}-seed{cfg.seed}", cfg, [_ckpt(cfg, cfg.task)]
                     if cfg.task != "reid" else [])
    return report


# ------------------------------------------------------------------ refine / report

def refine_stage(cfg: RunConfig) -> dict:
    """Refine every ``<obj>.xyz`` prediction file next to its ``<obj>.truth.xyz``."""
    pred_dir = Path(cfg.out) / "predictions" / f"material-seed{cfg.seed}"
    files = sorted(p for p in pred_dir.glob("*.xyz") if p.name.count(".") == 1)
    if not files:
        raise StageError(f"no material predictions in {pred_dir}; run eval --task material first")
    rcfg = cfg.refine_config()
    before, after, truth, changes = [], [], [], {}
    for path in files:
        pred = read_xyz(path)
        gt = read_xyz(path.with_suffix(".truth.xyz"))
        if np.bincount(pred.labels).max() >= rcfg.min_occurrence:
            result = refine_detailed(pred.points, pred.labels, rcfg)
            labels = result.labels
            changes[path.stem] = {"filtered": result.filtered, "votes": result.changes}
        else:
            labels = pred.labels
            changes[path.stem] = {"skipped": "no label reaches min_occurrence"}
        write_xyz(path.with_suffix(".refined.xyz"), PointCloud(pred.points, labels))
        before.append(pred.labels)
        after.append(labels)
        truth.append(gt.labels)
    truth = np.concatenate(truth)
    summary = {"before_f1": macro_f1(np.concatenate(before), truth, N_MATERIAL_CLASSES),
               "after_f1": macro_f1(np.concatenate(after), truth, N_MATERIAL_CLASSES),
               "config": asdict(rcfg), "changes": changes}
    (Path(cfg.out) / f"refine-seed{cfg.seed}.json").write_text(json.dumps(summary, indent=1))
    write_provenance(cfg.out, f"refine-seed{cfg.seed}", cfg, files)
    return summary


def report_stage(cfg: RunConfig) -> list:
    """Mean and sd over every eval report found under ``cfg.out``."""
    reports = []
    for path in sorted(Path(cfg.out).glob("eval-*.json")):
        reports.append(EvalReport.load(path))
    rows = aggregate(reports)
    if rows:
        with open(Path(cfg.out) / "summary.csv", "w") as fh:
            fh.write("task,name,n,mean,sd\n")
            for r in rows:
                fh.write(f"{r['task']},{r['name']},{r['n']},{r['mean']!r},{r['sd']!r}\n")
    return rows

