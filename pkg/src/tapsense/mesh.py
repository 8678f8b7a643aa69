"""Triangle meshes: primitives, OBJ/PLY I/O, ray casting and point-to-surface distance.

Units are metres. Primitives rest on the base plane z = 0 and are centred on
the vertical axis through the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_material: np.ndarray = None
    name: str = ""
    category: str = ""

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.face_material is None:
            self.face_material = np.zeros(len(self.faces), dtype=np.int64)
        self.face_material = np.asarray(self.face_material, dtype=np.int64).reshape(-1)
        if self.face_material.size != len(self.faces):
            raise MeshError("one material id per face required")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def check(self) -> None:
        if len(self.faces) == 0 or not np.any(self.face_areas() > 0):
            raise MeshError(f"degenerate mesh {self.name!r}: no face with positive area")

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def height(self) -> float:
        return float(self.vertices[:, 2].max())

    def transformed(self, scale=1.0, offset=(0.0, 0.0, 0.0)) -> "TriMesh":
        return TriMesh(self.vertices * scale + np.asarray(offset), self.faces.copy(),
                       self.face_material.copy(), self.name, self.category)


# ---------------------------------------------------------------- primitives

def _ring(r, z, n, phase=0.0):
    a = phase + 2 * np.pi * np.arange(n) / n
    return np.column_stack([r * np.cos(a), r * np.sin(a), np.full(n, z)])


def _fan(center_idx, ring_idx, flip=False):
    nxt = np.roll(ring_idx, -1)
    faces = np.column_stack([np.full(len(ring_idx), center_idx), ring_idx, nxt])
    return faces[:, [0, 2, 1]] if flip else faces


def _band(lo_idx, hi_idx):
    lo_n, hi_n = np.roll(lo_idx, -1), np.roll(hi_idx, -1)
    return np.vstack([np.column_stack([lo_idx, lo_n, hi_n]), np.column_stack([lo_idx, hi_n, hi_idx])])


def frustum(r_bottom, r_top, height, segments=48, name="", category=""):
    """Closed solid of revolution between two rings; ``r_top == 0`` makes a cone."""
    verts = [_ring(r_bottom, 0.0, segments)]
    bottom = np.arange(segments)
    faces = []
    verts.append([[0.0, 0.0, 0.0]])
    faces.append(_fan(segments, bottom, flip=True))
    if r_top > 0:
        verts.append(_ring(r_top, height, segments))
        top = segments + 1 + np.arange(segments)
        faces.append(_band(bottom, top))
        verts.append([[0.0, 0.0, height]])
        faces.append(_fan(2 * segments + 1, top))
    else:
        verts.append([[0.0, 0.0, height]])
        faces.append(_fan(segments + 1, bottom))
    return TriMesh(np.vstack(verts), np.vstack(faces), name=name, category=category)


def cylinder(radius, height, segments=48, name="cylinder"):
    return frustum(radius, radius, height, segments, name, "cylinder")


def cone(radius, height, segments=48, name="cone"):
    return frustum(radius, 0.0, height, segments, name, "cone")


def box(sx, sy, sz, name="box"):
    hx, hy = sx / 2, sy / 2
    v = np.array([[x, y, z] for z in (0.0, sz) for y in (-hy, hy) for x in (-hx, hx)])
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    faces = [f for a, b, c, d in quads for f in ((a, b, c), (a, c, d))]
    return TriMesh(v, faces, name=name, category="cube")


def cube(side, name="cube"):
    return box(side, side, side, name)


def pyramid(base, height, sides=4, name="pyramid"):
    """Right pyramid over a regular polygon whose circumradius is ``base / 2``."""
    m = frustum(base / 2, 0.0, height, segments=sides, name=name)
    m.category = {3: "triangular_pyramid", 4: "quadrangular_pyramid"}.get(sides, "pyramid")
    return m


def prism(radius, height, sides=3, name="prism"):
    m = frustum(radius, radius, height, segments=sides, name=name)
    m.category = "prism"
    return m


def sphere(radius, rings=16, segments=32, name="sphere"):
    verts = [[0.0, 0.0, 0.0]]
    ring_ids = []
    for k in range(1, rings):
        polar = np.pi * k / rings
        start = len(verts)
        verts.extend(_ring(radius * np.sin(polar), radius - radius * np.cos(polar), segments))
        ring_ids.append(np.arange(start, start + segments))
    verts.append([0.0, 0.0, 2 * radius])
    faces = [_fan(0, ring_ids[0], flip=True)]
    for lo, hi in zip(ring_ids[:-1], ring_ids[1:]):
        faces.append(_band(lo, hi))
    faces.append(_fan(len(verts) - 1, ring_ids[-1]))
    return TriMesh(np.array(verts), np.vstack(faces), name=name, category="sphere")


def cup(radius, height, wall=0.004, segments=48, name="cup"):
    """Open-topped cylinder with an inner wall: a concave cylinder."""
    inner = radius - wall
    floor = min(wall, height / 4)
    verts = [_ring(radius, 0.0, segments), _ring(radius, height, segments),
             _ring(inner, height, segments), _ring(inner, floor, segments),
             [[0.0, 0.0, 0.0]], [[0.0, 0.0, floor]]]
    ob, ot, it, ib = (np.arange(segments) + k * segments for k in range(4))
    c0, c1 = 4 * segments, 4 * segments + 1
    faces = [_fan(c0, ob, flip=True), _band(ob, ot), _band(ot, it), _band(it, ib), _fan(c1, ib)]
    return TriMesh(np.vstack(verts), np.vstack(faces), name=name, category="cylinder_concave")


def assign_materials_by_height(mesh: TriMesh, split_z: float, below: int, above: int) -> TriMesh:
    centroid_z = mesh.triangles[:, :, 2].mean(axis=1)
    mesh.face_material = np.where(centroid_z < split_z, below, above).astype(np.int64)
    return mesh


# ---------------------------------------------------------------- queries

def ray_intersect(mesh: TriMesh, origin, direction, travel=np.inf, eps=1e-12):
    """First hit of a ray with the mesh (Moller-Trumbore over all faces).

    Returns ``(t, face_index)`` with ``0 <= t <= travel`` or ``None``.
    Rays lying in a triangle's plane do not hit it.
    """
    mesh.check()
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    tri = mesh.triangles
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-15
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    s = origin - tri[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (t >= -eps) & (t <= travel)
    if not np.any(hit):
        return None
    idx = np.flatnonzero(hit)
    best = idx[np.argmin(t[idx])]
    return max(float(t[best]), 0.0), int(best)


def closest_points_on_triangles(point, tri):
    """Closest point on each triangle ``tri (F, 3, 3)`` to one ``point`` (region tests)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac, ap = b - a, c - a, point - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = point - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = point - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]

        region_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t_ab = d1 / (d1 - d3)
        out = np.where(region_ab[:, None], a + ab * t_ab[:, None], out)

        region_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t_ac = d2 / (d2 - d6)
        out = np.where(region_ac[:, None], a + ac * t_ac[:, None], out)

        region_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out = np.where(region_bc[:, None], b + (c - b) * t_bc[:, None], out)

    out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)
    return out


def closest_face(mesh: TriMesh, point):
    """Return ``(distance, face_index)`` of the surface point nearest to ``point``."""
    mesh.check()
    point = np.asarray(point, dtype=np.float64)
    cp = closest_points_on_triangles(point, mesh.triangles)
    d = np.linalg.norm(cp - point, axis=1)
    d[~np.isfinite(d)] = np.inf
    k = int(np.argmin(d))
    return float(d[k]), k


def point_mesh_distance(mesh: TriMesh, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return np.array([closest_face(mesh, p)[0] for p in points])


# ---------------------------------------------------------------- file I/O

def write_obj(path, mesh: TriMesh) -> None:
    """ASCII OBJ; per-face material ids are written as ``usemtl <id>`` groups."""
    lines = [f"# {mesh.name} {mesh.category}".rstrip()]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    current = None
    for (a, b, c), m in zip(mesh.faces.tolist(), mesh.face_material.tolist()):
        if m != current:
            lines.append(f"usemtl {m}")
            current = m
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> TriMesh:
    verts, faces, mats = [], [], []
    material = 0
    name, category = Path(path).stem, ""
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if n == 1:
                parts = line[1:].split()
                category = parts[1] if len(parts) > 1 else ""
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                verts.append([float(x) for x in rest[:3]])
            elif tag == "f":
                idx = [int(tok.split("/")[0]) for tok in rest]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
                    mats.append(material)
            elif tag == "usemtl":
                material = int(rest[0])
        except (ValueError, IndexError) as exc:
            raise MeshError(f"{path}:{n}: cannot parse {raw!r}") from exc
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64), np.array(mats), name, category)


def write_ply(path, mesh: TriMesh) -> None:
    header = [
        "ply", "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property double x", "property double y", "property double z",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices", "property int material",
        "end_header",
    ]
    body = [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    body += [f"3 {a} {b} {c} {m}" for (a, b, c), m in zip(mesh.faces.tolist(), mesh.face_material.tolist())]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_ply(path) -> TriMesh:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError(f"{path}: not a PLY file")
    n_vert = n_face = 0
    face_props = []
    element = None
    k = 1
    while k < len(lines) and lines[k].strip() != "end_header":
        tok = lines[k].split()
        if tok[:2] == ["format", "binary_little_endian"] or tok[:2] == ["format", "binary_big_endian"]:
            raise MeshError(f"{path}: only ASCII PLY is supported")
        if tok[0] == "element":
            element = tok[1]
            if element == "vertex":
                n_vert = int(tok[2])
            elif element == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and element == "face":
            face_props.append(tok[-1])
        k += 1
    body = lines[k + 1:]
    if len(body) < n_vert + n_face:
        raise MeshError(f"{path}: truncated body")
    verts = np.array([[float(x) for x in body[i].split()[:3]] for i in range(n_vert)])
    faces, mats = [], []
    for i in range(n_face):
        vals = [int(x) for x in body[n_vert + i].split()]
        count = vals[0]
        idx = vals[1:1 + count]
        extra = dict(zip(face_props[1:], vals[1 + count:]))
        for j in range(1, count - 1):
            faces.append([idx[0], idx[j], idx[j + 1]])
            mats.append(extra.get("material", 0))
    return TriMesh(verts, np.array(faces, dtype=np.int64), np.array(mats), Path(path).stem)


def read_mesh(path) -> TriMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise MeshError(f"{path}: unsupported mesh format {suffix!r}")
