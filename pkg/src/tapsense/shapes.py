"""Point clouds: Chamfer distances, surface sampling and subsampling augmentation.

Nearest-neighbour queries go through a k-d tree with exact search; the
brute-force versions are kept as test oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .mesh import MeshError, TriMesh

CM_TO_M = 0.01


class CloudError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.points.shape[0] < 1:
            raise CloudError("point cloud must contain at least one point")
        if not np.all(np.isfinite(self.points)):
            raise CloudError("point coordinates must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.size != self.points.shape[0]:
                raise CloudError("one label per point required")

    def __len__(self):
        return self.points.shape[0]


def _points(c) -> np.ndarray:
    pts = c.points if isinstance(c, PointCloud) else np.asarray(c, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if pts.shape[0] == 0:
        raise CloudError("empty point cloud")
    return pts


def nearest(query, reference):
    """Distance to, and index of, the nearest ``reference`` point for each ``query`` point."""
    query, reference = _points(query), _points(reference)
    d, idx = cKDTree(reference).query(query, k=1)
    return np.asarray(d, dtype=np.float64), np.asarray(idx, dtype=np.int64)


def nearest_brute(query, reference):
    query, reference = _points(query), _points(reference)
    d = np.sqrt(((query[:, None, :] - reference[None, :, :]) ** 2).sum(axis=-1))
    idx = d.argmin(axis=1)
    return d[np.arange(len(query)), idx], idx


def chamfer(a, b, variant: str = "L1", brute: bool = False) -> float:
    """Symmetric Chamfer distance: mean NN distance a->b plus mean NN distance b->a.

    ``variant="L1"`` uses Euclidean distances, ``"L2"`` squared distances.
    """
    if variant not in ("L1", "L2"):
        raise ValueError(f"unknown Chamfer variant {variant!r}")
    nn = nearest_brute if brute else nearest
    d_ab, _ = nn(a, b)
    d_ba, _ = nn(b, a)
    if variant == "L2":
        d_ab, d_ba = d_ab**2, d_ba**2
    return float(d_ab.mean() + d_ba.mean())


def eval_chamfer_l1(predicted, truth) -> float:
    """CD-L1 in the clouds' units (metres throughout the metrics)."""
    return chamfer(predicted, truth, "L1")


def sample_mesh_surface(mesh: TriMesh, n: int = 5000, seed: int = 0) -> PointCloud:
    """Area-weighted uniform samples on the surface, labelled with the face material."""
    areas = mesh.face_areas()
    if len(areas) == 0 or areas.sum() <= 0:
        raise MeshError(f"mesh {mesh.name!r} has zero surface area")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles[face]
    pts = ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
           + (r1 * r2)[:, None] * tri[:, 2])
    return PointCloud(pts, mesh.face_material[face])


def augment_subsample(cloud, lo: float = 0.80, hi: float = 0.90, copies: int = 1, seed: int = 0):
    """Random subsets keeping a uniform fraction in ``[lo, hi]`` of the points."""
    if lo > hi:
        raise CloudError(f"lo {lo} exceeds hi {hi}")
    pc = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    n = len(pc)
    if n < 10:
        raise CloudError("augmentation needs at least 10 points")
    rng = np.random.default_rng(seed)
    k_min, k_max = int(np.ceil(lo * n)), int(np.floor(hi * n))
    out = []
    for _ in range(copies):
        k = int(rng.integers(k_min, max(k_min, k_max) + 1))
        keep = np.sort(rng.choice(n, size=k, replace=False))
        out.append(PointCloud(pc.points[keep], None if pc.labels is None else pc.labels[keep]))
    return out


def normalize_cloud(points, workspace: float = 1.0):
    """Centre at the centroid and scale the farthest point to ``workspace``.

    Returns ``(normalised, center, scale)`` with ``points = normalised * scale + center``.
    """
    pts = _points(points)
    center = pts.mean(axis=0)
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    scale = radius / workspace if radius > 0 else 1.0
    return (pts - center) / scale, center, scale


# ---------------------------------------------------------------- file formats

def write_xyz(path, cloud) -> None:
    pc = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    with open(path, "w") as fh:
        for k, (x, y, z) in enumerate(pc.points.tolist()):
            tail = f" {int(pc.labels[k])}" if pc.labels is not None else ""
            fh.write(f"{x!r} {y!r} {z!r}{tail}\n")


def read_xyz(path) -> PointCloud:
    pts, labels = [], []
    ncols = None
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) not in (3, 4) or (ncols is not None and len(parts) != ncols):
            raise CloudError(f"{path}:{n}: expected 3 or 4 columns consistently, got {len(parts)}")
        ncols = len(parts)
        try:
            pts.append([float(v) for v in parts[:3]])
            if ncols == 4:
                labels.append(int(parts[3]))
        except ValueError as exc:
            raise CloudError(f"{path}:{n}: {raw!r}") from exc
    if not pts:
        raise CloudError(f"{path}: no points")
    return PointCloud(np.array(pts), np.array(labels) if ncols == 4 else None)


def write_cloud_bin(path, cloud) -> None:
    """Little-endian float32 ``N x 3`` plus ``<path>.json`` sidecar (labels inline)."""
    pc = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    path = Path(path)
    pc.points.astype("<f4").tofile(path)
    meta = {"n": len(pc), "dims": 3, "dtype": "float32",
            "labels": None if pc.labels is None else pc.labels.tolist()}
    path.with_name(path.name + ".json").write_text(json.dumps(meta))


def read_cloud_bin(path) -> PointCloud:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    pts = np.fromfile(path, dtype="<f4").astype(np.float64)
    if pts.size != 3 * meta["n"]:
        raise CloudError(f"{path}: expected {meta['n']} points")
    return PointCloud(pts.reshape(-1, 3), meta["labels"])
