"""Strike detection, clip extraction and Mel spectrograms for contact-microphone audio."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 44100
CLIP_LENGTH = 20000
STRIKE_WINDOW = 1000
N_FFT = 2048
N_MELS = 64
N_FRAMES = 64
F_MAX = 8192.0
DB_FLOOR = -80.0


class InvalidInput(ValueError):
    """Raised when an audio operation receives data outside its contract."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidInput("waveform must be a non-empty 1-D array")
        if self.rate != SAMPLE_RATE:
            raise InvalidInput(f"sample rate must be {SAMPLE_RATE}, got {self.rate}")
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise InvalidInput("samples must be finite and within [-1, 1]")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


@dataclass(frozen=True)
class StrikeClip:
    samples: np.ndarray
    source_offset: int = 0
    padding: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (CLIP_LENGTH,):
            raise InvalidInput(f"strike clip must hold exactly {CLIP_LENGTH} samples")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray
    fft_size: int = N_FFT
    n_mels: int = N_MELS
    f_max: float = F_MAX
    hop: int = 0

    def sidecar(self) -> dict:
        return {"fft": self.fft_size, "n_mels": self.n_mels, "f_max": self.f_max, "hop": self.hop}


def _as_samples(w) -> np.ndarray:
    if isinstance(w, (Waveform, StrikeClip)):
        return w.samples
    return np.asarray(w, dtype=np.float64)


def window_levels(samples: np.ndarray, window: int = STRIKE_WINDOW) -> np.ndarray:
    """Mean absolute amplitude of consecutive non-overlapping windows (tail dropped)."""
    n = samples.size // window
    return np.abs(samples[: n * window]).reshape(n, window).mean(axis=1)


def detect_strike(w, window: int = STRIKE_WINDOW, noise_gate: float | None = None) -> int | None:
    """Return the start sample of the first window louder than both neighbours.

    The mean absolute amplitude is tracked over consecutive windows of
    ``window`` samples. The first window whose level strictly exceeds the
    previous and the next window marks the strike; ``None`` when no window
    qualifies.

    Parameters
    ----------
    w : Waveform or array_like
        Recording to scan.
    window : int
        Window length in samples.
    noise_gate : float, optional
        When given, a window must additionally exceed ``noise_gate`` times the
        median window level. This rejects local maxima of stationary background
        noise; ``None`` applies the bare neighbour rule.
    """
    samples = _as_samples(w)
    if window < 1:
        raise InvalidInput("window must be positive")
    if samples.size < 3 * window:
        raise InvalidInput(f"waveform shorter than {3 * window} samples")
    levels = window_levels(samples, window)
    peaks = (levels[1:-1] > levels[:-2]) & (levels[1:-1] > levels[2:])
    if noise_gate is not None:
        peaks &= levels[1:-1] > noise_gate * np.median(levels)
    hits = np.flatnonzero(peaks)
    if hits.size == 0:
        return None
    return int(hits[0] + 1) * window


def extract_clip(w, offset: int, length: int = CLIP_LENGTH) -> StrikeClip:
    """Cut ``length`` samples starting at ``offset``; zero-pad past the end."""
    samples = _as_samples(w)
    if not 0 <= offset < samples.size:
        raise InvalidInput(f"offset {offset} outside waveform of {samples.size} samples")
    piece = samples[offset : offset + length]
    padding = length - piece.size
    if padding:
        piece = np.concatenate([piece, np.zeros(padding)])
    return StrikeClip(piece.copy(), source_offset=int(offset), padding=int(padding))


def strike_clip(w, window: int = STRIKE_WINDOW, noise_gate: float = 1.5) -> StrikeClip:
    """Locate the strike and return its clip.

    The gated rule is tried first; recordings without a clear strike (soft
    materials) fall back to the bare neighbour rule and finally to offset 0.
    """
    offset = detect_strike(w, window, noise_gate=noise_gate)
    if offset is None:
        offset = detect_strike(w, window)
    return extract_clip(w, offset or 0)


def hop_length(n_samples: int = CLIP_LENGTH, n_frames: int = N_FRAMES) -> int:
    # round half up: 20000 / 64 = 312.5 -> 313
    return int(math.floor(n_samples / n_frames + 0.5))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    f_min: float = 0.0,
    f_max: float = F_MAX,
) -> np.ndarray:
    """Triangular HTK-scale filters, each row scaled so its largest weight is 1.

    Returns an ``(n_mels, n_fft // 2 + 1)`` matrix.
    """
    if f_max > rate / 2:
        raise InvalidInput(f"f_max {f_max} exceeds Nyquist {rate / 2}")
    freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    peak = weights.max(axis=1, keepdims=True)
    if np.any(peak == 0):
        raise InvalidInput("mel bands narrower than the FFT resolution")
    return weights / peak


def power_spectrogram(samples: np.ndarray, n_fft: int = N_FFT, hop: int = 512) -> np.ndarray:
    """Centered, zero-padded, Hann-windowed power STFT, shape ``(n_fft//2+1, frames)``."""
    padded = np.pad(samples, n_fft // 2)
    n_frames = 1 + (padded.size - n_fft) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    window = np.hanning(n_fft + 1)[:-1]
    spectrum = np.fft.rfft(frames * window, axis=1)
    return (spectrum.real**2 + spectrum.imag**2).T


def power_to_db(power: np.ndarray, floor: float = DB_FLOOR, amin: float = 1e-10) -> np.ndarray:
    """10*log10(power / max power), clipped below at ``floor``; silence maps to the floor."""
    ref = float(np.max(power)) if power.size else 0.0
    if ref <= 0.0:
        return np.full(power.shape, floor)
    db = 10.0 * np.log10(np.maximum(power, amin) / ref)
    return np.maximum(db, floor)


def mel_spectrogram(c, f_max: float = F_MAX, n_frames: int = N_FRAMES) -> MelSpectrogram:
    """64x64 log-power Mel spectrogram of a strike clip."""
    samples = _as_samples(c)
    if f_max > SAMPLE_RATE / 2:
        raise InvalidInput(f"f_max {f_max} exceeds Nyquist {SAMPLE_RATE / 2}")
    hop = hop_length(samples.size, n_frames)
    power = power_spectrogram(samples, N_FFT, hop)
    mel = mel_filterbank(f_max=f_max) @ power
    if mel.shape[1] < n_frames:
        mel = np.pad(mel, ((0, 0), (0, n_frames - mel.shape[1])))
    mel = mel[:, :n_frames]
    return MelSpectrogram(power_to_db(mel), f_max=float(f_max), hop=hop)


def standardize(values: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Per-spectrogram zero-mean, unit-variance scaling used before the networks."""
    values = np.asarray(values, dtype=np.float64)
    return (values - values.mean()) / (values.std() + eps)


def read_wav(path) -> Waveform:
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise InvalidInput(f"{path}: expected mono audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        raise InvalidInput(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, rate)


def write_wav(path, w) -> None:
    samples = _as_samples(w)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), SAMPLE_RATE, pcm)


def save_spectrogram(path, spec: MelSpectrogram) -> None:
    """Write ``<path>`` as row-major float32 and ``<path>.json`` as the sidecar."""
    path = Path(path)
    np.asarray(spec.values, dtype="<f4").tofile(path)
    path.with_name(path.name + ".json").write_text(json.dumps(spec.sidecar(), sort_keys=True))


def load_spectrogram(path) -> MelSpectrogram:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    values = np.fromfile(path, dtype="<f4").astype(np.float64)
    if values.size != meta["n_mels"] * N_FRAMES:
        raise InvalidInput(f"{path}: expected {meta['n_mels']}x{N_FRAMES} values, got {values.size}")
    return MelSpectrogram(
        values.reshape(meta["n_mels"], N_FRAMES),
        fft_size=meta["fft"],
        n_mels=meta["n_mels"],
        f_max=meta["f_max"],
        hop=meta["hop"],
    )
