import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tapsense.descriptors import (DESCRIPTOR_NAMES, descriptors, read_features_csv, rescale_unit, separability,
                                  write_features_csv)
from tapsense.dsp import CLIP_LENGTH, InvalidInput

DATA = Path(__file__).parent / "data"


def sine(freq, amp=0.5):
    return amp * np.sin(2 * np.pi * freq * np.arange(CLIP_LENGTH) / 44100)


def flatness_oracle(x):
    """Whole-clip spectral flatness: geometric over arithmetic mean of the power spectrum."""
    p = np.abs(np.fft.rfft(x)) ** 2 + 1e-20
    return np.exp(np.mean(np.log(p))) / np.mean(p)


def test_zero_clip():
    d = descriptors(np.zeros(CLIP_LENGTH))
    assert d.shape == (12,)
    assert np.all(np.isfinite(d))
    assert d[0] == 0.0 and d[6] == 0.0


def test_scaling_doubles_rms_keeps_centroid():
    rng = np.random.default_rng(0)
    x = 0.2 * sine(900) + 0.05 * rng.standard_normal(CLIP_LENGTH)
    a, b = descriptors(x), descriptors(2 * x)
    assert b[0] == pytest.approx(2 * a[0], rel=1e-12)
    assert b[1] == pytest.approx(a[1], rel=1e-9)


def test_noise_flatter_than_sine():
    noise = np.clip(0.3 * np.random.default_rng(1).standard_normal(CLIP_LENGTH), -1, 1)
    tone = sine(200)
    assert flatness_oracle(noise) > flatness_oracle(tone)
    assert descriptors(noise)[4] > descriptors(tone)[4]


def test_descriptors_deterministic():
    x = sine(440) + 0.01 * np.random.default_rng(3).standard_normal(CLIP_LENGTH)
    assert np.array_equal(descriptors(x), descriptors(x.copy()))


def test_rescale_examples():
    out = rescale_unit([[1, 2], [3, 2], [5, 2]])
    assert np.allclose(out[:, 0], [0, 0.5, 1])
    assert np.all(out[:, 1] == 0)
    with pytest.raises(InvalidInput):
        rescale_unit([[1, 2]])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 12)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_rescale_range(rows):
    out = rescale_unit(rows)
    assert np.all((out >= 0) & (out <= 1))


def test_characterization_table_in_unit_range():
    with open(DATA / "characterization_means.csv") as fh:
        rows = np.array([[float(v) for v in r[1:]] for r in list(csv.reader(fh))[1:]])
    assert rows.shape == (12, 12)
    assert np.all((rows >= 0) & (rows <= 1))
    assert np.all((rescale_unit(rows) >= 0) & (rescale_unit(rows) <= 1))


def test_separability_perfect_and_shuffled():
    x = np.array([[0.0] * 3] * 5 + [[1.0] * 3] * 5)
    labels = [0] * 5 + [1] * 5
    assert separability(x, labels)["silhouette"] == pytest.approx(1.0)

    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (20, 4)), rng.normal(1, 0.1, (20, 4))])
    scores = [separability(pts, rng.permutation([0] * 20 + [1] * 20))["silhouette"] for _ in range(30)]
    assert abs(np.mean(scores)) < 0.2


def test_separability_errors_and_degenerate():
    with pytest.raises(InvalidInput):
        separability(np.zeros((4, 2)), [0, 0, 0, 0])
    with pytest.warns(RuntimeWarning):
        out = separability(np.ones((4, 3)), [0, 0, 1, 1])
    assert out["silhouette"] == 0.0 and out["degenerate"]


def test_pca_projection_shape():
    rng = np.random.default_rng(4)
    out = separability(rng.standard_normal((10, 12)), [0] * 5 + [1] * 5)
    assert out["pca2d"].shape == (10, 2)
    assert -1 <= out["silhouette"] <= 1


def test_features_csv_roundtrip(tmp_path):
    rows = np.random.default_rng(5).random((3, 12))
    write_features_csv(tmp_path / "f.csv", rows, ids=["a", "b", "c"])
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == "id," + ",".join(DESCRIPTOR_NAMES)
    back, ids = read_features_csv(tmp_path / "f.csv")
    assert np.array_equal(back, rows) and ids == ["a", "b", "c"]
