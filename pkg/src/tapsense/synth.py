"""Synthetic contact-microphone recordings of taps: damped modes plus motor noise.

The mode tables are invented for the simulator, not measured. They are tuned
so hard materials ring with narrow high-Q modes, glass and ceramic overlap
in frequency (ceramic decays faster), and foam and fabric give only a
low-frequency thump that stays below twice the motor-noise peak.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from .dsp import CLIP_LENGTH, SAMPLE_RATE, InvalidInput, Waveform, detect_strike
from .mesh import TriMesh, closest_face
from .simulator import TapRecord

log = logging.getLogger(__name__)

MATERIALS = ("plastic", "glass", "wood", "metal", "ceramic", "paper", "rubber", "foam", "fabric")
HARD = ("glass", "metal", "ceramic")
SOFT = ("foam", "fabric")
RECORDING_SECONDS = 5.0
STRIKE_GUARD = 1000


@dataclass(frozen=True)
class MaterialModel:
    material_id: int
    modes: tuple  # (frequency Hz, damping 1/s, amplitude)
    noise_floor: float  # peak of the broadband contact click
    stiffness_scale: float = 1.0  # click decay rate multiplier

    def __post_init__(self):
        if not 0 <= self.material_id < len(MATERIALS):
            raise InvalidInput(f"material id {self.material_id} out of range")
        for f, d, a in self.modes:
            if not 0 < f < SAMPLE_RATE / 2 or d <= 0 or a < 0:
                raise InvalidInput(f"bad mode {(f, d, a)}")

    @property
    def name(self) -> str:
        return MATERIALS[self.material_id]


@dataclass(frozen=True)
class SynthConfig:
    duration: float = RECORDING_SECONDS
    seed: int = 0
    motor_noise_level: float = 0.004  # RMS
    force_range: tuple = (0.7, 1.0)
    max_jitter: float = 0.03

    def __post_init__(self):
        if self.duration < 0.5 or self.duration * SAMPLE_RATE < CLIP_LENGTH + STRIKE_GUARD:
            raise InvalidInput("recording too short to hold a strike clip")


_MODE_TABLE = {
    "plastic": ([(820, 80, 0.30), (1900, 120, 0.18), (3600, 180, 0.08), (5300, 240, 0.04)], 0.05, 1.0),
    "glass": ([(2450, 22, 0.26), (5300, 30, 0.17), (8400, 45, 0.09), (11900, 60, 0.05)], 0.06, 2.0),
    "wood": ([(430, 60, 0.34), (1150, 95, 0.20), (2350, 140, 0.09)], 0.06, 0.8),
    "metal": ([(1750, 5, 0.28), (4150, 8, 0.20), (6900, 12, 0.13), (9900, 18, 0.07)], 0.05, 2.5),
    "ceramic": ([(2250, 55, 0.25), (4950, 75, 0.16), (7700, 100, 0.09), (11200, 130, 0.04)], 0.07, 2.0),
    "paper": ([(310, 150, 0.10), (900, 230, 0.07), (2050, 320, 0.04)], 0.12, 0.6),
    "rubber": ([(160, 90, 0.18), (390, 140, 0.10), (720, 220, 0.05)], 0.02, 0.3),
    "foam": ([(65, 8, 0.0110), (150, 14, 0.0040)], 0.001, 0.1),
    "fabric": ([(125, 12, 0.0100), (310, 20, 0.0045), (520, 30, 0.0020)], 0.002, 0.15),
}


def default_models() -> dict:
    """The nine built-in material models keyed by name."""
    return {name: MaterialModel(MATERIALS.index(name), tuple(modes), floor, stiff)
            for name, (modes, floor, stiff) in _MODE_TABLE.items()}


def model_for(material) -> MaterialModel:
    name = MATERIALS[material] if isinstance(material, (int, np.integer)) else material
    return default_models()[name]


def load_models(path) -> dict:
    """Read ``<material>.mode<k> = freq damping amp`` / ``.noise_floor`` / ``.stiffness`` lines."""
    table = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = (s.strip() for s in line.partition("="))
        name, _, attr = key.partition(".")
        if name not in MATERIALS:
            raise InvalidInput(f"{path}:{n}: unknown material {name!r}")
        entry = table.setdefault(name, {"modes": {}, "noise_floor": 0.0, "stiffness": 1.0})
        if attr.startswith("mode"):
            entry["modes"][int(attr[4:])] = tuple(float(v) for v in value.split())
        elif attr in ("noise_floor", "stiffness"):
            entry[attr] = float(value)
        else:
            raise InvalidInput(f"{path}:{n}: unknown attribute {attr!r}")
    return {name: MaterialModel(MATERIALS.index(name), tuple(e["modes"][k] for k in sorted(e["modes"])),
                                e["noise_floor"], e["stiffness"]) for name, e in table.items()}


def damped_modes(modes, n_samples: int) -> np.ndarray:
    """Sum of ``a * exp(-d t) * sin(2 pi f t)`` sampled from t = 0."""
    t = np.arange(n_samples) / SAMPLE_RATE
    out = np.zeros(n_samples)
    for f, d, a in modes:
        out += a * np.exp(-d * t) * np.sin(2 * np.pi * f * t)
    return out


def analytic_mode_energy(modes) -> float:
    """Closed-form integral over [0, inf) of the squared mode sum (cross terms included)."""
    total = 0.0
    for fi, di, ai in modes:
        for fj, dj, aj in modes:
            s = di + dj
            wm = 2 * np.pi * (fi - fj)
            wp = 2 * np.pi * (fi + fj)
            total += 0.5 * ai * aj * (s / (s**2 + wm**2) - s / (s**2 + wp**2))
    return total


def motor_noise(n_samples: int, level: float, rng) -> np.ndarray:
    if level <= 0:
        return np.zeros(n_samples)
    sos = butter(4, [200.0, 3000.0], btype="bandpass", fs=SAMPLE_RATE, output="sos")
    noise = sosfilt(sos, rng.standard_normal(n_samples + 4096))[4096:]
    return noise * (level / np.sqrt(np.mean(noise**2)))


def synth_impact(m: MaterialModel, cfg: SynthConfig = SynthConfig(), strike_time: float = 1.0, rng=None) -> Waveform:
    """One recording with a strike at ``strike_time`` seconds.

    ``rng`` overrides the generator seeded from ``cfg.seed``.
    """
    n = int(round(cfg.duration * SAMPLE_RATE))
    start = int(round(strike_time * SAMPLE_RATE))
    if strike_time < 0 or start + CLIP_LENGTH > n:
        raise InvalidInput(f"strike at {strike_time}s leaves no room for a full clip")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    out = motor_noise(n, cfg.motor_noise_level, rng)
    if m.modes or m.noise_floor > 0:
        force = rng.uniform(*cfg.force_range)
        tail = n - start
        strike = damped_modes(m.modes, tail)
        if m.noise_floor > 0:
            t = np.arange(tail) / SAMPLE_RATE
            click = rng.standard_normal(tail) * np.exp(-600.0 * m.stiffness_scale * t)
            strike += m.noise_floor * click / max(1.0, np.max(np.abs(click)))
        out[start:] += force * strike
    return Waveform(np.clip(out, -1.0, 1.0))


def peak_to_noise(w, strike_time: float) -> float:
    """Peak |amplitude| over the strike clip divided by the peak of the noise before it."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w)
    start = int(round(strike_time * SAMPLE_RATE))
    before = np.max(np.abs(x[:start]))
    return float(np.max(np.abs(x[start:start + CLIP_LENGTH])) / before) if before > 0 else np.inf


def size_factor(mesh: TriMesh, reference: float = 0.12) -> float:
    """Larger objects ring lower: frequency multiplier ``sqrt(reference / size)``, clipped."""
    lo, hi = mesh.bounds()
    size = float(np.max(hi - lo))
    return float(np.clip(np.sqrt(reference / max(size, 1e-6)), 0.7, 1.4))


def contact_model(base: MaterialModel, record: TapRecord, mesh: TriMesh, rng, max_jitter=0.03) -> MaterialModel:
    """Per-contact variant: size-scaled, jittered frequencies and height-dependent mode weights."""
    scale = size_factor(mesh)
    rel = record.z / max(mesh.height(), 1e-6)
    modes = []
    for k, (f, d, a) in enumerate(base.modes):
        jitter = 1.0 + rng.uniform(-max_jitter, max_jitter)
        weight = 0.6 + 0.4 * abs(np.cos((k + 1) * np.pi * rel))
        modes.append((min(f * scale * jitter, 0.45 * SAMPLE_RATE), d, a * weight))
    return replace(base, modes=tuple(modes))


def synth_for_taps(records, obj: TriMesh, cfg: SynthConfig = SynthConfig(), models=None):
    """One recording per valid tap; material taken from the face nearest the contact.

    Returns a list of ``(TapRecord, Waveform)``; the acoustic flag ``a`` of each
    returned record reflects whether a gated strike is detectable.
    """
    models = models or default_models()
    out = []
    latest = cfg.duration - CLIP_LENGTH / SAMPLE_RATE - 0.1
    for rec in records:
        if not rec.v:
            log.info("tap %d of %s has no voltage contact; skipped", rec.i, obj.name)
            continue
        rng = np.random.default_rng([cfg.seed, rec.i])
        _, face = closest_face(obj, rec.point)
        base = models[MATERIALS[int(obj.face_material[face])]]
        model = contact_model(base, rec, obj, rng, cfg.max_jitter)
        strike_time = rng.uniform(0.5, max(0.5, latest))
        w = synth_impact(model, cfg, strike_time, rng=rng)
        heard = detect_strike(w, noise_gate=2.0) is not None
        out.append((replace(rec, a=heard), w))
    return out


def material_of_contact(obj: TriMesh, point) -> int:
    return int(obj.face_material[closest_face(obj, point)[1]])
