"""Twelve scalar acoustic descriptors, unit rescaling and a PCA/silhouette separability check.

Every vector-valued descriptor (contrast bands, MFCCs, chroma, tonnetz,
tempogram lags, polynomial coefficients) is averaged over time *and* over
its coefficient axis so the feature vector has exactly twelve entries.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.spatial.distance import cdist

from .dsp import SAMPLE_RATE, InvalidInput, _as_samples, mel_filterbank, power_spectrogram, power_to_db

DESCRIPTOR_NAMES = tuple(f"D{i}" for i in range(1, 13))
DESCRIPTOR_LABELS = (
    "rms",
    "spectral_centroid",
    "spectral_bandwidth",
    "spectral_contrast",
    "spectral_flatness",
    "spectral_rolloff",
    "zero_crossing_rate",
    "tempogram",
    "poly_features",
    "mfcc",
    "chroma",
    "tonnetz",
)


@dataclass(frozen=True)
class DescriptorParams:
    n_fft: int = 2048
    hop: int = 512
    n_mels: int = 64
    f_max: float = 16384.0
    rolloff: float = 0.9
    poly_order: int = 3
    n_mfcc: int = 20
    contrast_fmin: float = 200.0
    contrast_bands: int = 6
    contrast_quantile: float = 0.02
    tempo_window: int = 384


def _safe_ratio(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _frames(samples, n_fft, hop):
    padded = np.pad(samples, n_fft // 2)
    n = 1 + (padded.size - n_fft) // hop
    return np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n]


def spectral_contrast(mag, freqs, fmin, n_bands, quantile):
    edges = np.concatenate([[0.0], fmin * 2.0 ** np.arange(n_bands), [freqs[-1] + 1.0]])
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        band = np.sort(mag[(freqs >= lo) & (freqs < hi)], axis=0)
        if band.shape[0] == 0:
            continue
        k = max(1, int(round(quantile * band.shape[0])))
        valley = band[:k].mean(axis=0)
        peak = band[-k:].mean(axis=0)
        rows.append(20.0 * np.log10((peak + 1e-10) / (valley + 1e-10)))
    return np.array(rows)


def onset_strength(mel_db):
    flux = np.maximum(0.0, np.diff(mel_db, axis=1)).mean(axis=0)
    return np.concatenate([[0.0], flux])


def tempogram(envelope, window):
    """Hann-windowed local autocorrelation of an onset envelope, lag-0 normalised."""
    win = max(1, min(window, envelope.size))
    padded = np.pad(envelope, (win // 2, win - win // 2 - 1))
    segs = np.lib.stride_tricks.sliding_window_view(padded, win) * np.hanning(win + 2)[1:-1]
    spec = np.fft.rfft(segs, n=2 * win, axis=1)
    acf = np.fft.irfft(spec.real**2 + spec.imag**2, n=2 * win, axis=1)[:, :win]
    return _safe_ratio(acf, np.repeat(acf[:, :1], win, axis=1))


def chroma_matrix(freqs):
    weights = np.zeros((12, freqs.size))
    audible = freqs >= 27.5
    pitch = np.round(12.0 * np.log2(freqs[audible] / 440.0) + 69.0).astype(int) % 12
    weights[pitch, np.flatnonzero(audible)] = 1.0
    return weights


def tonnetz_matrix():
    pcs = np.arange(12)
    angles = [pcs * 7 * np.pi / 6, pcs * 3 * np.pi / 2, pcs * 2 * np.pi / 3]
    radii = [1.0, 1.0, 0.5]
    rows = []
    for a, r in zip(angles, radii):
        rows += [r * np.sin(a), r * np.cos(a)]
    return np.array(rows)


def descriptors(c, params: DescriptorParams = DescriptorParams()) -> np.ndarray:
    """Return the twelve time-averaged descriptors D1..D12 of one clip."""
    x = _as_samples(c)
    p = params
    power = power_spectrogram(x, p.n_fft, p.hop)
    mag = np.sqrt(power)
    freqs = np.arange(power.shape[0]) * SAMPLE_RATE / p.n_fft
    total = mag.sum(axis=0)

    frames = _frames(x, p.n_fft, p.hop)
    rms = np.sqrt(np.mean(frames**2, axis=1))

    centroid = _safe_ratio((freqs[:, None] * mag).sum(axis=0), total)
    spread = (mag * (freqs[:, None] - centroid) ** 2).sum(axis=0)
    bandwidth = np.sqrt(_safe_ratio(spread, total))

    contrast = spectral_contrast(mag, freqs, p.contrast_fmin, p.contrast_bands, p.contrast_quantile)

    floored = np.maximum(power, 1e-10)
    flatness = np.exp(np.log(floored).mean(axis=0)) / floored.mean(axis=0)

    cumulative = np.cumsum(mag, axis=0)
    reached = cumulative >= p.rolloff * cumulative[-1]
    rolloff = freqs[np.argmax(reached, axis=0)]

    signs = frames >= 0
    zcr = np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1) / p.n_fft

    mel_power = mel_filterbank(n_fft=p.n_fft, n_mels=p.n_mels, f_max=p.f_max) @ power
    mel_db = power_to_db(mel_power)
    tempo = tempogram(onset_strength(mel_db), p.tempo_window)

    poly = np.polyfit(freqs / freqs[-1], mag, p.poly_order)

    mfcc = dct(mel_db, type=2, norm="ortho", axis=0)[: p.n_mfcc]

    chroma_raw = chroma_matrix(freqs) @ power
    chroma = _safe_ratio(chroma_raw, np.repeat(chroma_raw.max(axis=0, keepdims=True), 12, axis=0))
    chroma_l1 = _safe_ratio(chroma, np.repeat(chroma.sum(axis=0, keepdims=True), 12, axis=0))
    tonnetz = tonnetz_matrix() @ chroma_l1

    parts = (rms, centroid, bandwidth, contrast, flatness, rolloff, zcr, tempo, poly, mfcc, chroma, tonnetz)
    return np.array([float(np.mean(v)) for v in parts])


def rescale_unit(rows) -> np.ndarray:
    """Per-column min-max scaling to [0, 1]; constant columns become 0."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InvalidInput("rescale_unit needs at least two rows")
    lo = rows.min(axis=0)
    span = rows.max(axis=0) - lo
    out = np.zeros_like(rows)
    np.divide(rows - lo, span, out=out, where=span > 0)
    return np.clip(out, 0.0, 1.0)


def pca_2d(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    x = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    comps = vt[:2]
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros((2 - comps.shape[0], x.shape[1]))])
    return x @ comps.T


def silhouette(features, labels) -> float:
    """Mean silhouette coefficient with Euclidean distances."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    d = cdist(x, x)
    classes = np.unique(labels)
    scores = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        own = labels == labels[i]
        if own.sum() < 2:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == c].mean() for c in classes if c != labels[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def separability(features, labels) -> dict:
    """2-D PCA projection plus silhouette score (stand-in for a t-SNE plot).

    Returns ``{"pca2d": (N, 2) array, "silhouette": float, "degenerate": bool}``.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if x.ndim != 2 or x.shape[0] != labels.size:
        raise InvalidInput("features must be (N, d) with one label per row")
    if classes.size < 2 or counts.min() < 2:
        raise InvalidInput("separability needs >= 2 classes with >= 2 points each")
    if np.all(x == x[0]):
        warnings.warn("all feature rows identical; silhouette reported as 0", RuntimeWarning)
        return {"pca2d": np.zeros((x.shape[0], 2)), "silhouette": 0.0, "degenerate": True}
    return {"pca2d": pca_2d(x), "silhouette": silhouette(x, labels), "degenerate": False}


def write_features_csv(path, rows, ids=None) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow((["id"] if ids is not None else []) + list(DESCRIPTOR_NAMES))
        for k, row in enumerate(rows):
            prefix = [ids[k]] if ids is not None else []
            writer.writerow(prefix + [repr(float(v)) for v in row])


def read_features_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_id = header[0] == "id"
        if list(header[1:] if has_id else header) != list(DESCRIPTOR_NAMES):
            raise InvalidInput(f"{path}: header must be D1..D12")
        ids, rows = [], []
        for line in reader:
            if has_id:
                ids.append(line[0])
                line = line[1:]
            rows.append([float(v) for v in line])
    return np.array(rows).reshape(-1, 12), (ids if has_id else None)
