"""Material classifier, shape completion network and object re-identification network."""

from __future__ import annotations

import hashlib

import numpy as np

from . import functional as F
from .layers import BatchNorm, Conv2d, Dropout, Linear, Module
from .tensor import Tensor

N_MATERIAL_CLASSES = 9
N_OBJECTS = 82
N_OUTPUT_POINTS = 2000
N_REID_TAPS = 15
SPEC_SIZE = 64


def _input(x, ndim, what):
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if t.ndim != ndim:
        raise ValueError(f"{what}: expected a {ndim}-d array, got shape {t.shape}")
    return t


class SpectrogramEncoder(Module):
    """Three conv blocks taking ``(B, C, 64, 64)`` spectrogram stacks to ``(B, 150)``.

    conv 6/2 -> BN, ReLU -> pool 2 -> conv 5 -> BN, dropout, ReLU -> pool 2
    -> conv 5 -> BN, ReLU (-> dropout when ``final_dropout``).
    """

    def __init__(self, in_channels, dropout, rng, final_dropout=True, dtype=np.float64):
        self.in_channels = in_channels
        self.conv1 = Conv2d(in_channels, 16, 6, rng, stride=2, dtype=dtype)
        self.bn1 = BatchNorm(16, axis=1, dtype=dtype)
        self.conv2 = Conv2d(16, 32, 5, rng, dtype=dtype)
        self.bn2 = BatchNorm(32, axis=1, dtype=dtype)
        self.drop2 = Dropout(dropout, rng)
        self.conv3 = Conv2d(32, 150, 5, rng, dtype=dtype)
        self.bn3 = BatchNorm(150, axis=1, dtype=dtype)
        self.drop3 = Dropout(dropout if final_dropout else 0.0, rng)

    def trace(self, x):
        """Feature maps after every stage, for shape inspection."""
        x = _input(x, 4, "spectrogram encoder")
        if x.shape[1:] != (self.in_channels, SPEC_SIZE, SPEC_SIZE):
            raise ValueError(f"expected (B, {self.in_channels}, 64, 64) input, got {x.shape}")
        stages = [("input", x)]
        x = F.relu(self.bn1(self.conv1(x)))
        stages.append(("conv1", x))
        x = F.max_pool2d(x, 2)
        stages.append(("pool1", x))
        x = F.relu(self.drop2(self.bn2(self.conv2(x))))
        stages.append(("conv2", x))
        x = F.max_pool2d(x, 2)
        stages.append(("pool2", x))
        x = self.drop3(F.relu(self.bn3(self.conv3(x))))
        stages.append(("conv3", x))
        return stages

    def forward(self, x):
        return F.flatten(self.trace(x)[-1][1])


class PointEncoder(Module):
    """Per-point layers with a tiled global max concatenated in the middle.

    ``widths = (a, b, c, d)``: 3 -> a, BN, ReLU -> b, [concat global max -> 2b]
    -> c, BN, ReLU -> d -> max over points. Input ``(B, N, 3)``, output ``(B, d)``.
    """

    def __init__(self, widths, rng, dtype=np.float64):
        a, b, c, d = widths
        self.widths = tuple(widths)
        self.fc1 = Linear(3, a, rng, dtype)
        self.bn1 = BatchNorm(a, axis=-1, dtype=dtype)
        self.fc2 = Linear(a, b, rng, dtype)
        self.fc3 = Linear(2 * b, c, rng, dtype)
        self.bn3 = BatchNorm(c, axis=-1, dtype=dtype)
        self.fc4 = Linear(c, d, rng, dtype)

    def forward(self, pts):
        pts = _input(pts, 3, "point encoder")
        if pts.shape[1] < 1 or pts.shape[2] != 3:
            raise ValueError(f"expected (B, N>=1, 3) points, got {pts.shape}")
        h = self.fc2(F.relu(self.bn1(self.fc1(pts))))
        g = F.max_reduce(h, axis=1, keepdims=True)
        h = F.concat([h, F.broadcast_to(g, h.shape)], axis=-1)
        h = self.fc4(F.relu(self.bn3(self.fc3(h))))
        return F.max_reduce(h, axis=1)


class MaterialNet(Module):
    def __init__(self, n_classes=N_MATERIAL_CLASSES, dropout=0.5, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.encoder = SpectrogramEncoder(1, dropout, rng, final_dropout=True, dtype=dtype)
        self.fc1 = Linear(150, 70, rng, dtype)
        self.drop = Dropout(dropout, rng)
        # no nonlinearity between the two fully connected layers
        self.fc2 = Linear(70, n_classes, rng, dtype)

    def forward(self, spec):
        """``spec`` is ``(B, 1, 64, 64)`` or ``(B, 64, 64)``; returns ``(B, n_classes)`` logits."""
        spec = spec if isinstance(spec, Tensor) else Tensor(np.asarray(spec))
        if spec.ndim == 3:
            spec = F.reshape(spec, (spec.shape[0], 1) + spec.shape[1:])
        return self.fc2(self.drop(self.fc1(self.encoder(spec))))


class ShapeNet(Module):
    def __init__(self, n_points=N_OUTPUT_POINTS, widths=(128, 256, 512, 1024), hidden=1024, seed=0,
                 dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.n_points = n_points
        self.encoder = PointEncoder(widths, rng, dtype)
        self.fc1 = Linear(widths[-1], hidden, rng, dtype)
        self.fc2 = Linear(hidden, hidden, rng, dtype)
        self.fc3 = Linear(hidden, 3 * n_points, rng, dtype)

    def encode(self, pts):
        return self.encoder(pts)

    def forward(self, pts):
        """``pts`` is ``(B, N, 3)`` or ``(N, 3)``; returns ``(B, n_points, 3)`` or ``(n_points, 3)``."""
        pts = pts if isinstance(pts, Tensor) else Tensor(np.asarray(pts))
        single = pts.ndim == 2
        if single:
            pts = F.reshape(pts, (1,) + pts.shape)
        code = self.encode(pts)
        out = self.fc3(F.relu(self.fc2(F.relu(self.fc1(code)))))
        return F.reshape(out, (self.n_points, 3) if single else (pts.shape[0], self.n_points, 3))


REID_MODES = ("fused", "audio", "points")


class ReIDNet(Module):
    """Audio and contact-point encoders fused by an MLP.

    ``mode="audio"`` / ``"points"`` zero the other modality's 150 features so
    the fusion input stays 300 wide.
    """

    def __init__(self, n_objects=N_OBJECTS, n_taps=N_REID_TAPS, mode="fused", dropout=0.2348, seed=0,
                 dtype=np.float64):
        if mode not in REID_MODES:
            raise ValueError(f"mode must be one of {REID_MODES}")
        rng = np.random.default_rng(seed)
        self.mode, self.n_taps = mode, n_taps
        self.audio = SpectrogramEncoder(n_taps, dropout, rng, final_dropout=False, dtype=dtype)
        self.points = PointEncoder((64, 64, 128, 150), rng, dtype)
        self.drop0 = Dropout(dropout, rng)
        self.fc1 = Linear(300, 170, rng, dtype)
        self.drop1 = Dropout(dropout, rng)
        self.fc2 = Linear(170, 170, rng, dtype)
        self.drop2 = Dropout(dropout, rng)
        self.fc3 = Linear(170, n_objects, rng, dtype)

    def forward(self, specs, pts):
        """``specs`` ``(B, 15, 64, 64)`` and ``pts`` ``(B, 15, 3)``; returns ``(B, n_objects)``."""
        specs = _input(specs, 4, "re-id spectrograms")
        pts = _input(pts, 3, "re-id points")
        if specs.shape[1] != self.n_taps or pts.shape[1] != self.n_taps:
            raise ValueError(f"need exactly {self.n_taps} spectrograms and points, got "
                             f"{specs.shape[1]} and {pts.shape[1]}")
        if specs.shape[0] != pts.shape[0]:
            raise ValueError("spectrogram and point batch sizes differ")
        B = specs.shape[0]
        zero = Tensor(np.zeros((B, 150), dtype=self.fc1.weight.data.dtype))
        a = self.audio(specs) if self.mode != "points" else zero
        p = self.points(pts) if self.mode != "audio" else zero
        h = self.drop0(F.concat([a, p], axis=-1))
        h = self.drop1(self.fc1(h))
        h = self.drop2(self.fc2(h))
        return self.fc3(h)


def architecture_hash(model: Module) -> str:
    """Digest of the class name plus every parameter and buffer name and shape."""
    desc = type(model).__name__ + ";" + ";".join(f"{k}:{tuple(v.shape)}" for k, v in sorted(model.state_dict().items()))
    return hashlib.sha256(desc.encode()).hexdigest()[:16]


def conv_out(size, kernel, stride=1):
    return (size - kernel) // stride + 1
