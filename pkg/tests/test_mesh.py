import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tapsense.mesh import (MeshError, TriMesh, box, closest_face, cone, cube, cup, cylinder, prism, pyramid,
                           ray_intersect, read_mesh, sphere, write_obj, write_ply)


def brute_ray(mesh, origin, direction):
    """Scalar Moller-Trumbore loop over every triangle."""
    best = None
    for a, b, c in mesh.triangles:
        e1, e2 = b - a, c - a
        p = np.cross(direction, e2)
        det = e1 @ p
        if abs(det) < 1e-15:
            continue
        s = origin - a
        u = (s @ p) / det
        q = np.cross(s, e1)
        v = (direction @ q) / det
        t = (e2 @ q) / det
        if u >= 0 and v >= 0 and u + v <= 1 and t >= 0 and (best is None or t < best):
            best = t
    return best


def brute_distance(mesh, point, samples=200):
    """Upper bound from dense barycentric sampling of every face."""
    w = np.random.default_rng(0).dirichlet([1, 1, 1], samples)
    pts = np.einsum("sk,fkd->fsd", w, mesh.triangles).reshape(-1, 3)
    return np.min(np.linalg.norm(pts - point, axis=1))


ALL = [cylinder(0.03, 0.1), cone(0.04, 0.08), box(0.05, 0.03, 0.07), cube(0.06), pyramid(0.06, 0.05),
       prism(0.04, 0.06), sphere(0.04), cup(0.035, 0.09)]


@pytest.mark.parametrize("mesh", ALL, ids=lambda m: m.name)
def test_primitives_on_base_and_centered(mesh):
    lo, hi = mesh.bounds()
    assert lo[2] == pytest.approx(0.0, abs=1e-12)
    assert lo[0] < 0 < hi[0] and lo[1] < 0 < hi[1]
    assert np.all(mesh.face_areas() > 0)


def test_cube_ray_example():
    m = cube(1.0)
    t, _ = ray_intersect(m, [2.0, 0.0, 0.5], [-1.0, 0.0, 0.0])
    assert t == pytest.approx(1.5)
    assert ray_intersect(m, [2.0, 3.0, 0.5], [-1.0, 0.0, 0.0]) is None
    assert ray_intersect(m, [2.0, 0.0, 0.5], [-1.0, 0.0, 0.0], travel=1.0) is None


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_ray_matches_brute_force_from_inside(seed):
    rng = np.random.default_rng(seed)
    mesh = ALL[seed % len(ALL)]
    lo, hi = mesh.bounds()
    origin = lo + (hi - lo) * rng.uniform(0.3, 0.7, 3)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    hit, oracle = ray_intersect(mesh, origin, d, eps=0.0), brute_ray(mesh, origin, d)
    assert (hit is None) == (oracle is None)
    if hit is not None:
        assert hit[0] == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_closest_face_not_beaten_by_sampling(seed):
    rng = np.random.default_rng(seed)
    mesh = ALL[seed % len(ALL)]
    p = rng.uniform(-0.08, 0.12, 3)
    d, _ = closest_face(mesh, p)
    assert d <= brute_distance(mesh, p) + 1e-12


def test_closest_face_on_cube():
    d, _ = closest_face(cube(1.0), [1.5, 0.0, 0.5])
    assert d == pytest.approx(1.0)


def test_degenerate_mesh():
    flat = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(MeshError):
        ray_intersect(flat, [0, 0, 1], [0, 0, -1])
    with pytest.raises(MeshError):
        TriMesh([[0, 0, 0]], [[0, 1, 2]])


@pytest.mark.parametrize("suffix", [".obj", ".ply"])
def test_mesh_roundtrip(tmp_path, suffix):
    m = cylinder(0.02, 0.05)
    m.face_material[: len(m.faces) // 2] = 3
    path = tmp_path / f"m{suffix}"
    (write_obj if suffix == ".obj" else write_ply)(path, m)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)
    assert np.array_equal(back.face_material, m.face_material)


def test_unsupported_format(tmp_path):
    with pytest.raises(MeshError):
        read_mesh(tmp_path / "m.stl")
