"""Dataset files, splits, balancing, label transfer and re-identification sampling.

On-disk layout under a dataset root::

    manifest.json
    objects/<id>/taps.txt
    objects/<id>/audio/<i>.wav      one per tap with v = 1
    objects/<id>/gt.xyz             labelled ground-truth cloud
    splits/<name>.json              {"train": [...], "val": [...], "test": [...], "seed": s}
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .dsp import read_wav
from .shapes import PointCloud, read_xyz
from .simulator import TapRecord

log = logging.getLogger(__name__)

FULL_SPLIT = (60, 11, 11)
REID_TAPS = 15
REID_TRAIN_DRAWS = 500
REID_EVAL_DRAWS = 50
REID_FRACTIONS = (0.6, 0.2, 0.2)


class DatasetError(ValueError):
    pass


# ------------------------------------------------------------------ tap files

def parse_taps(path) -> list:
    """Parse ``x y z a v f i`` lines; blank lines are skipped."""
    records = []
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 7:
            raise DatasetError(f"{path}:{n}: expected 7 fields, got {len(parts)}")
        try:
            x, y, z = (float(v) for v in parts[:3])
            a, v, f, i = (int(v) for v in parts[3:])
        except ValueError as exc:
            raise DatasetError(f"{path}:{n}: {exc}") from exc
        if a not in (0, 1) or v not in (0, 1):
            raise DatasetError(f"{path}:{n}: contact flags must be 0 or 1")
        if not 1 <= f <= 4:
            raise DatasetError(f"{path}:{n}: finger {f} outside 1..4")
        if not all(np.isfinite((x, y, z))):
            raise DatasetError(f"{path}:{n}: non-finite coordinate")
        records.append(TapRecord(x, y, z, bool(a), bool(v), f, i))
    return records


# ------------------------------------------------------------------ labels

def assign_material_labels(contacts, annotated: PointCloud) -> np.ndarray:
    """Label of the nearest annotated point for each contact; ties go to the lowest index."""
    if annotated.labels is None:
        raise DatasetError("annotated cloud carries no labels")
    pts = contacts.points if isinstance(contacts, PointCloud) else np.asarray(contacts, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    ref = annotated.points
    tree = cKDTree(ref)
    d, idx = tree.query(pts, k=1)
    idx = np.asarray(idx, dtype=np.int64)
    # the tree may return any of several equidistant points; resolve to the lowest index
    for k, cand in enumerate(tree.query_ball_point(pts, d * (1 + 1e-9) + 1e-15)):
        if len(cand) > 1:
            cand = np.sort(cand)
            dist = np.sqrt(((ref[cand] - pts[k]) ** 2).sum(axis=1))
            idx[k] = cand[np.argmin(dist)]
    return annotated.labels[idx]


def balance_by_duplication(items, class_of, seed=0) -> list:
    """Append uniformly drawn duplicates until every class matches the largest one."""
    items = list(items)
    classes = {}
    for k, it in enumerate(items):
        classes.setdefault(class_of(it), []).append(k)
    if not classes:
        raise DatasetError("nothing to balance")
    target = max(len(v) for v in classes.values())
    rng = np.random.default_rng(seed)
    out = list(items)
    for c in sorted(classes, key=repr):
        members = classes[c]
        extra = target - len(members)
        if extra:
            out.extend(items[members[j]] for j in rng.integers(0, len(members), extra))
    return out


# ------------------------------------------------------------------ splits

@dataclass
class SplitSpec:
    train: list
    val: list
    test: list
    seed: int = 0

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise DatasetError("split partitions overlap")

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1))

    @classmethod
    def load(cls, path) -> "SplitSpec":
        d = json.loads(Path(path).read_text())
        return cls(list(d["train"]), list(d["val"]), list(d["test"]), int(d.get("seed", 0)))


def split_sizes(n: int):
    """Full-scale object counts for 82 objects, the same ratio otherwise (each part >= 1)."""
    if n < 3:
        raise DatasetError(f"need at least 3 objects to split, got {n}")
    total = sum(FULL_SPLIT)
    val = max(1, int(round(n * FULL_SPLIT[1] / total)))
    test = max(1, int(round(n * FULL_SPLIT[2] / total)))
    train = n - val - test
    if train < 1:
        val, test, train = 1, 1, n - 2
    return train, val, test


def split_material(object_ids, seed=0, exclude=()) -> SplitSpec:
    """Object-disjoint train/val/test split after dropping excluded objects."""
    ids = sorted(o for o in object_ids if o not in set(exclude))
    n_train, n_val, _ = split_sizes(len(ids))
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[k] for k in order]
    return SplitSpec(shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:], seed)


def split_taps(tap_indices, seed=0, fractions=REID_FRACTIONS):
    """Per-object tap partition (train, val, test) after a seeded shuffle."""
    taps = np.asarray(tap_indices)
    order = np.random.default_rng(seed).permutation(len(taps))
    n_train = int(round(fractions[0] * len(taps)))
    n_val = int(round(fractions[1] * len(taps)))
    shuffled = taps[order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def sample_reid(tap_indices, k=REID_TAPS, draws=REID_TRAIN_DRAWS, seed=0, name="object"):
    """``draws`` subsets of ``k`` distinct taps; ``None`` (with a warning) when too few taps exist."""
    taps = np.asarray(tap_indices)
    if len(taps) < k:
        log.warning("%s has %d taps in this partition (< %d); skipped", name, len(taps), k)
        return None
    rng = np.random.default_rng(seed)
    return np.stack([taps[rng.choice(len(taps), k, replace=False)] for _ in range(draws)])


_BLEND_TABLE = ((100, 1.0), (200, 0.9), (300, 0.8), (400, 0.6), (500, 0.4), (600, 0.2), (700, 0.1),
                (800, 0.05), (1000, 0.0))


def blend_fraction(epoch: int) -> float:
    """Synthetic share of the shape-training data at ``epoch`` (0 <= epoch < 1000)."""
    if not 0 <= epoch < 1000:
        raise DatasetError(f"epoch {epoch} outside the blending schedule [0, 1000)")
    for upper, frac in _BLEND_TABLE:
        if epoch < upper:
            return frac
    raise AssertionError("unreachable")


def synthetic_only(epoch: int) -> float:
    return 1.0


# ------------------------------------------------------------------ dataset tree

@dataclass
class ObjectRecord:
    object_id: str
    taps: list
    clip_paths: dict
    gt_cloud: PointCloud | None
    shape_category: str = ""
    is_synthetic: bool = True
    extra: dict = field(default_factory=dict)

    def check(self, gt_points=5000) -> None:
        missing = [r.i for r in self.taps if r.v and r.i not in self.clip_paths]
        if missing:
            raise DatasetError(f"{self.object_id}: taps {missing[:5]} have no audio clip")
        if self.gt_cloud is None or self.gt_cloud.labels is None:
            raise DatasetError(f"{self.object_id}: ground-truth cloud missing or unlabelled")
        if len(self.gt_cloud) != gt_points:
            raise DatasetError(f"{self.object_id}: ground truth has {len(self.gt_cloud)} points, "
                               f"expected {gt_points}")

    def contact_points(self) -> np.ndarray:
        return np.array([r.point for r in self.taps if r.v]).reshape(-1, 3)


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DatasetError(f"{root}: no manifest.json (run the simulate stage first)")
    return json.loads(path.read_text())


def load_object(root, object_id, meta=None) -> ObjectRecord:
    base = Path(root) / "objects" / object_id
    if not base.is_dir():
        raise DatasetError(f"{base}: object directory missing")
    taps = parse_taps(base / "taps.txt")
    clips = {int(p.stem): p for p in sorted((base / "audio").glob("*.wav"))}
    gt = read_xyz(base / "gt.xyz") if (base / "gt.xyz").exists() else None
    meta = meta or {}
    return ObjectRecord(object_id, taps, clips, gt, meta.get("category", ""), meta.get("synthetic", True),
                        {k: v for k, v in meta.items() if k not in ("category", "synthetic")})


def load_dataset(root, exclude=()) -> list:
    """All objects listed in the manifest except ``exclude``, in manifest order."""
    manifest = load_manifest(root)
    excluded = set(exclude) | set(manifest.get("exclude", []))
    return [load_object(root, o["id"], o) for o in manifest["objects"] if o["id"] not in excluded]


def load_clip(record: ObjectRecord, tap_index: int):
    return read_wav(record.clip_paths[tap_index])
