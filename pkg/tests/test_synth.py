from dataclasses import replace

import numpy as np
import pytest

from tapsense.descriptors import descriptors, rescale_unit, separability
from tapsense.dsp import SAMPLE_RATE, InvalidInput, detect_strike, mel_spectrogram, strike_clip
from tapsense.mesh import assign_materials_by_height, cylinder
from tapsense.simulator import run_policy
from tapsense.synth import (MATERIALS, SOFT, MaterialModel, SynthConfig, analytic_mode_energy, damped_modes,
                            default_models, load_models, material_of_contact, peak_to_noise, synth_for_taps, synth_impact)

MODELS = default_models()


def test_nine_default_models():
    assert sorted(MODELS) == sorted(MATERIALS)
    for m in MODELS.values():
        assert 3 <= len(m.modes) <= 6 or m.name in SOFT
        assert all(f < SAMPLE_RATE / 2 and d > 0 for f, d, _ in m.modes)


@pytest.mark.parametrize("seed", range(5))
def test_metal_strike_detected(seed):
    # motor noise has its own local maxima, so the detector runs gated as in the pipeline
    w = synth_impact(MODELS["metal"], SynthConfig(seed=seed), strike_time=1.0)
    assert abs(detect_strike(w, noise_gate=1.5) - 44100) <= 1000


@pytest.mark.parametrize("name", SOFT)
@pytest.mark.parametrize("seed", range(5))
def test_soft_materials_below_twice_noise(name, seed):
    w = synth_impact(MODELS[name], SynthConfig(seed=seed), strike_time=1.0)
    assert peak_to_noise(w, 1.0) < 2


def test_silent_model_gives_zeros():
    w = synth_impact(MaterialModel(0, (), 0.0), SynthConfig(motor_noise_level=0.0))
    assert not np.any(w.samples)


def test_strike_must_fit():
    with pytest.raises(InvalidInput):
        synth_impact(MODELS["wood"], SynthConfig(), strike_time=4.7)
    with pytest.raises(InvalidInput):
        SynthConfig(duration=0.4)
    with pytest.raises(InvalidInput):
        MaterialModel(0, ((30000.0, 1.0, 1.0),), 0.0)


def test_deterministic():
    a = synth_impact(MODELS["glass"], SynthConfig(seed=7))
    b = synth_impact(MODELS["glass"], SynthConfig(seed=7))
    assert np.array_equal(a.samples, b.samples)


@pytest.mark.parametrize("name", MATERIALS)
def test_mode_energy_matches_closed_form(name):
    modes = MODELS[name].modes
    slowest = min(d for _, d, _ in modes)
    n = int(SAMPLE_RATE * 12 / slowest)  # tail below e^-24 of the start
    numeric = np.sum(damped_modes(modes, n) ** 2) / SAMPLE_RATE
    assert numeric == pytest.approx(analytic_mode_energy(modes), rel=0.01)
    # single-mode sanity: a^2 / (4 d) for f >> d
    f, d, a = modes[0]
    assert analytic_mode_energy([(f, d, a)]) == pytest.approx(a * a / (4 * d), rel=0.01)


def test_synth_for_taps_two_materials():
    mesh = assign_materials_by_height(cylinder(0.04, 0.12), 0.06, MATERIALS.index("wood"),
                                      MATERIALS.index("metal"))
    records = run_policy(mesh)
    out = synth_for_taps(records, mesh, SynthConfig(seed=0))
    assert len(out) == sum(r.v for r in records)
    assert all(w.samples.size == 5 * SAMPLE_RATE for _, w in out)
    labels, centroids = [], []
    freqs = np.arange(64)
    for rec, w in out:
        spec = mel_spectrogram(strike_clip(w).samples).values
        power = 10 ** (spec / 10)
        centroids.append([np.sum(freqs[:, None] * power) / np.sum(power)])
        labels.append(material_of_contact(mesh, rec.point))
    assert separability(np.array(centroids), labels)["silhouette"] > 0.5


def test_synth_for_taps_skips_and_repeats():
    mesh = cylinder(0.03, 0.08)
    records = run_policy(mesh)[:10]
    out = synth_for_taps(records, mesh)
    assert len(out) == sum(r.v for r in records)
    again = synth_for_taps(records, mesh)
    assert all(np.array_equal(a.samples, b.samples) for (_, a), (_, b) in zip(out, again))


def test_one_nn_separates_nine_materials():
    cfg = SynthConfig(duration=1.0)
    feats, labels = [], []
    for k, name in enumerate(MATERIALS):
        base = MODELS[name]
        for s in range(50):
            rng = np.random.default_rng([k, s])
            jitter = rng.uniform(0.97, 1.03, len(base.modes))
            model = replace(base, modes=tuple((f * j, d, a) for (f, d, a), j in zip(base.modes, jitter)))
            w = synth_impact(model, cfg, strike_time=0.4, rng=rng)
            feats.append(descriptors(strike_clip(w).samples))
            labels.append(k)
    x, y = rescale_unit(np.array(feats)), np.array(labels)
    d = ((x[:, None] - x[None]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    assert np.mean(y[d.argmin(1)] == y) >= 0.95


def test_model_file(tmp_path):
    path = tmp_path / "models.cfg"
    path.write_text("metal.mode1 = 1000 5 0.3\nmetal.mode0 = 500 4 0.2\nmetal.noise_floor = 0.01\n")
    m = load_models(path)["metal"]
    assert m.modes == ((500.0, 4.0, 0.2), (1000.0, 5.0, 0.3)) and m.noise_floor == 0.01
    path.write_text("steel.mode0 = 1 1 1\n")
    with pytest.raises(InvalidInput):
        load_models(path)
