import numpy as np
import pytest

from tapsense.data import parse_taps
from tapsense.mesh import MeshError, box, cone, cylinder, point_mesh_distance
from tapsense.simulator import (ObjectNotFound, PolicyConfig, TapRecord, estimate_dimensions, explore,
                                export_taps, probe_contact, run_policy)

CFG = PolicyConfig()


def random_prismatic(seed):
    """Cylinders and square boxes with their true (height, half extent along x)."""
    rng = np.random.default_rng(seed)
    h = float(rng.uniform(0.04, 0.28))
    r = float(rng.uniform(0.008, 0.07))
    if seed % 2:
        return cylinder(r, h), h, r
    return box(2 * r, 2 * r, h), h, r


def test_probe_contact_examples():
    m = box(1.0, 1.0, 1.0)
    assert np.allclose(probe_contact(m, [2, 0, 0.5], [-1, 0, 0], 5), [0.5, 0, 0.5])
    assert probe_contact(m, [2, 2, 0.5], [-1, 0, 0], 5) is None
    with pytest.raises(ValueError):
        probe_contact(m, [2, 0, 0.5], [-2, 0, 0], 5)


def test_estimate_examples():
    d = estimate_dimensions(cylinder(0.03, 0.10))
    assert 0.09 <= d.height <= 0.10 and 0.025 <= d.radius <= 0.035
    d = estimate_dimensions(box(0.06, 0.06, 0.06))
    assert abs(d.radius - 0.03) <= CFG.descend_step


def test_flat_disk_below_resolution():
    try:
        d = estimate_dimensions(cylinder(0.05, 0.001))
    except ObjectNotFound:
        return
    assert d.height <= CFG.descend_step


def test_nothing_to_find():
    far = box(0.02, 0.02, 0.05).transformed(offset=(0.0, 0.5, 0.0))
    with pytest.raises(ObjectNotFound):
        estimate_dimensions(far)


def test_object_must_cross_centerline():
    with pytest.raises(MeshError):
        explore(box(0.02, 0.02, 0.05).transformed(offset=(0.5, 0.0, 0.0)))


@pytest.mark.parametrize("seed", range(20))
def test_policy_on_random_primitives(seed):
    mesh, h, r = random_prismatic(seed)
    run = explore(mesh)
    assert abs(run.dims.height - h) <= CFG.descend_step
    assert abs(run.dims.radius - r) <= CFG.descend_step
    assert run.dims.height <= h + CFG.descend_step
    assert run.top_taps == (run.dims.radius > CFG.radius_threshold)
    assert run.large_scale == (run.dims.height > CFG.height_threshold)
    valid = [t for t in run.records if t.v]
    assert 0 < len(valid) <= CFG.max_taps
    assert point_mesh_distance(mesh, [t.point for t in valid]).max() <= CFG.contact_tolerance
    assert any(t.side == "top" for t in run.records) == run.top_taps


def test_threshold_examples():
    assert not explore(cylinder(0.01, 0.1)).top_taps
    assert explore(cylinder(0.05, 0.25)).large_scale
    assert not explore(cylinder(0.05, 0.15)).large_scale


def test_monotonic_descent_and_sweeps():
    run = explore(cylinder(0.04, 0.12))
    for side in ("edge", "left", "back"):
        heights = [round(t.z, 9) for t in run.records if t.side == side]
        assert heights == sorted(heights, reverse=True)
    top = [t for t in run.records if t.side == "top"]
    assert [t.x for t in top] == sorted(t.x for t in top)


def test_max_taps_cap():
    run = explore(cylinder(0.07, 0.28), PolicyConfig(max_taps=40))
    assert sum(t.v for t in run.records) == 40


def test_deterministic():
    a, b = run_policy(cone(0.05, 0.1)), run_policy(cone(0.05, 0.1))
    assert a == b


def test_export_roundtrip(tmp_path):
    path = tmp_path / "taps.txt"
    export_taps([], path)
    assert path.read_text() == ""
    recs = run_policy(cylinder(0.03, 0.06))
    export_taps(recs, path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(recs) and all(len(l.split()) == 7 for l in lines)
    assert parse_taps(path) == recs


def test_export_three_records(tmp_path):
    recs = [TapRecord(0.1 * k, 0.2, 0.3, True, k != 1, k + 1, k) for k in range(3)]
    export_taps(recs, tmp_path / "t.txt")
    assert [len(l.split()) for l in (tmp_path / "t.txt").read_text().splitlines()] == [7, 7, 7]


def test_config_file(tmp_path):
    path = tmp_path / "policy.cfg"
    path.write_text("descend_step = 0.02\nmax_taps = 100\nprobe_heights = 0.02, 0.1\n")
    cfg = PolicyConfig.from_config(path)
    assert cfg.descend_step == 0.02 and cfg.max_taps == 100 and cfg.probe_heights == (0.02, 0.1)
    path.write_text("grid = 1\n")
    with pytest.raises(ValueError):
        PolicyConfig.from_config(path)
    with pytest.raises(ValueError):
        PolicyConfig(descend_step=0)
