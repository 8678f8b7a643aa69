"""Central-difference gradient checking for scalar-valued tensor functions."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numeric_grad(fn, inputs, index: int, eps: float = 1e-6) -> np.ndarray:
    x = inputs[index].data
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + eps
        up = fn(*inputs).data.item()
        flat[k] = old - eps
        down = fn(*inputs).data.item()
        flat[k] = old
        gflat[k] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    """``max |a - n| / max(1e-8, max |a|, max |n|)``."""
    scale = max(1e-8, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(fn, inputs, eps: float = 1e-6) -> list:
    """Relative error of the back-propagated gradient for each input that requires one.

    ``fn`` must be deterministic (fix any dropout RNG inside it).
    """
    for t in inputs:
        t.grad = None
    fn(*inputs).backward()
    errors = []
    for k, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        errors.append(relative_error(analytic, numeric_grad(fn, inputs, k, eps)))
    return errors


def param(shape, rng, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)
