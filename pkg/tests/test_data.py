import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tapsense.data import (REID_EVAL_DRAWS, REID_TRAIN_DRAWS, DatasetError, SplitSpec, assign_material_labels,
                           balance_by_duplication, blend_fraction, load_dataset, parse_taps, sample_reid,
                           split_material, split_sizes, split_taps)
from tapsense.shapes import PointCloud, nearest_brute, write_xyz
from tapsense.simulator import TapRecord, export_taps


def test_parse_taps_empty_and_errors(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("")
    assert parse_taps(path) == []
    path.write_text("0 0 0 1 1 1 0\n0 0 0 1 1 1\n")
    with pytest.raises(DatasetError, match=":2:"):
        parse_taps(path)
    for bad in ("0 0 0 2 1 1 0", "0 0 0 1 1 5 0", "a 0 0 1 1 1 0", "nan 0 0 1 1 1 0"):
        path.write_text(bad + "\n")
        with pytest.raises(DatasetError, match=":1:"):
            parse_taps(path)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False),
                          st.floats(0, 1, allow_nan=False), st.booleans(), st.booleans(), st.integers(1, 4)),
                max_size=20))
def test_tap_roundtrip_bitwise(tmp_path_factory, rows):
    recs = [TapRecord(x, y, z, a, v, f, i) for i, (x, y, z, a, v, f) in enumerate(rows)]
    path = tmp_path_factory.mktemp("taps") / "t.txt"
    export_taps(recs, path)
    assert parse_taps(path) == recs


def test_label_transfer_examples():
    ann = PointCloud([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [5, 6, 7])
    assert assign_material_labels([[1, 0, 0]], ann).tolist() == [6]
    assert assign_material_labels([[0.5, 0, 0]], ann).tolist() == [5]
    assert assign_material_labels([[1.5, 0, 0]], ann).tolist() == [6]
    with pytest.raises(DatasetError):
        assign_material_labels([[0, 0, 0]], PointCloud([[0, 0, 0]]))


def test_label_transfer_matches_brute_force():
    rng = np.random.default_rng(0)
    ann = PointCloud(rng.normal(size=(500, 3)), rng.integers(0, 9, 500))
    contacts = rng.normal(size=(200, 3))
    _, idx = nearest_brute(contacts, ann.points)
    assert np.array_equal(assign_material_labels(contacts, ann), ann.labels[idx])


def test_balance_examples():
    items = ["a1", "a2", "a3", "b1"]
    out = balance_by_duplication(items, lambda s: s[0], seed=0)
    assert out[:4] == items and sorted(s[0] for s in out) == ["a"] * 3 + ["b"] * 3
    assert balance_by_duplication(["a", "b"], lambda s: s) == ["a", "b"]
    assert out == balance_by_duplication(items, lambda s: s[0], seed=0)
    with pytest.raises(DatasetError):
        balance_by_duplication([], lambda s: s)


def test_split_sizes_and_determinism():
    assert split_sizes(82) == (60, 11, 11)
    ids = [f"o{k}" for k in range(83)]
    s = split_material(ids, seed=1, exclude=["o82"])
    assert (len(s.train), len(s.val), len(s.test)) == (60, 11, 11)
    assert "o82" not in s.train + s.val + s.test
    assert not set(s.train) & set(s.test)
    assert s == split_material(ids, seed=1, exclude=["o82"])
    with pytest.raises(DatasetError):
        split_material(["a", "b"])


@given(st.integers(3, 300))
def test_split_sizes_cover(n):
    sizes = split_sizes(n)
    assert sum(sizes) == n and min(sizes) >= 1


def test_split_spec_io(tmp_path):
    s = SplitSpec(["a"], ["b"], ["c"], 4)
    s.save(tmp_path / "s.json")
    assert SplitSpec.load(tmp_path / "s.json") == s
    with pytest.raises(DatasetError):
        SplitSpec(["a"], ["a"], [])


def test_reid_sampling(caplog):
    train, val, test = split_taps(np.arange(60), seed=0)
    assert (len(train), len(val), len(test)) == (36, 12, 12)
    assert not set(train) & set(test)
    draws = sample_reid(train, draws=REID_TRAIN_DRAWS, seed=1)
    assert draws.shape == (500, 15)
    assert all(len(set(d)) == 15 and set(d) <= set(train) for d in draws)
    assert sample_reid(test, k=12, draws=REID_EVAL_DRAWS).shape == (50, 12)
    with caplog.at_level(logging.WARNING):
        assert sample_reid(val, seed=0, name="mug") is None
    assert "mug" in caplog.text


def test_blend_examples():
    assert (blend_fraction(150), blend_fraction(850), blend_fraction(750)) == (0.9, 0.0, 0.05)


def test_load_dataset_tree(tmp_path):
    root = tmp_path / "ds"
    for oid in ("a", "b"):
        base = root / "objects" / oid
        (base / "audio").mkdir(parents=True)
        export_taps([TapRecord(0.0, 0.0, 0.1, True, True, 1, 0)], base / "taps.txt")
        (base / "audio" / "0.wav").write_bytes(b"")
        write_xyz(base / "gt.xyz", PointCloud(np.zeros((5000, 3)), np.zeros(5000)))
    (root / "manifest.json").write_text(json.dumps(
        {"objects": [{"id": "a", "category": "cup"}, {"id": "b"}], "exclude": ["b"]}))
    records = load_dataset(root)
    assert [r.object_id for r in records] == ["a"] and records[0].shape_category == "cup"
    records[0].check()
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing")
