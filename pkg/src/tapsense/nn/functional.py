"""Differentiable operations. Each returns a new ``Tensor`` whose closure
pushes the upstream gradient into its inputs."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..shapes import nearest
from .tensor import Tensor, as_tensor, node


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return node(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return node(a.data * b.data, (a, b), back)


def scale(x: Tensor, c: float) -> Tensor:
    return node(x.data * c, (x,), lambda g: x.accumulate(g * c))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return node(x.data * mask, (x,), lambda g: x.accumulate(g * mask))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return node(x.data.reshape(shape), (x,), lambda g: x.accumulate(g.reshape(old)))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t.accumulate(part)

    return node(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def broadcast_to(x: Tensor, shape) -> Tensor:
    old = x.shape
    return node(np.broadcast_to(x.data, shape).copy(), (x,), lambda g: x.accumulate(_unbroadcast(g, old)))


def max_reduce(x: Tensor, axis: int, keepdims=False) -> Tensor:
    """Max over ``axis``; the gradient goes to the first maximiser."""
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g if keepdims else np.expand_dims(g, axis), axis=axis)
        x.accumulate(gx)

    return node(out if keepdims else out.squeeze(axis), (x,), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis; ``weight`` is ``(in, out)``."""
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def back(g):
        if x.requires_grad:
            x.accumulate(g @ weight.data.T)
        g2 = g.reshape(-1, g.shape[-1])
        if weight.requires_grad:
            weight.accumulate(x.data.reshape(-1, x.shape[-1]).T @ g2)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return node(out, parents, back)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid 2-D cross-correlation. ``x`` is ``(B, C, H, W)``, ``weight`` ``(O, C, k, k)``."""
    B, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if Cw != C:
        raise ValueError(f"conv2d: input has {C} channels, kernel expects {Cw}")
    if H < kh or W < kw:
        raise ValueError(f"conv2d: input {H}x{W} smaller than kernel {kh}x{kw}")
    Ho, Wo = (H - kh) // stride + 1, (W - kw) // stride + 1
    win = sliding_window_view(x.data, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * kh * kw)
    wm = weight.data.reshape(O, -1)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    out = out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, O)
        if weight.requires_grad:
            weight.accumulate((gm.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate(gm.sum(axis=0))
        if x.requires_grad:
            dcols = (gm @ wm).reshape(B, Ho, Wo, C, kh, kw)
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x.accumulate(gx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return node(np.ascontiguousarray(out), parents, back)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size x size`` max pooling; trailing rows/columns are dropped."""
    B, C, H, W = x.shape
    Ho, Wo = H // size, W // size
    if Ho == 0 or Wo == 0:
        raise ValueError(f"max_pool2d: input {H}x{W} smaller than window {size}")
    blocks = (x.data[:, :, :Ho * size, :Wo * size]
              .reshape(B, C, Ho, size, Wo, size).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, size * size))
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def back(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx, g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, :Ho * size, :Wo * size] = (gb.reshape(B, C, Ho, Wo, size, size)
                                            .transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho * size, Wo * size))
        x.accumulate(gx)

    return node(out, (x,), back)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int, training: bool,
               running_mean: np.ndarray, running_var: np.ndarray, momentum=0.1, eps=1e-5) -> Tensor:
    """Normalise per channel on ``axis`` over every other axis.

    In training mode batch statistics are used and the running buffers are
    updated in place; otherwise the running statistics are used.
    """
    axis = axis % x.ndim
    red = tuple(a for a in range(x.ndim) if a != axis)
    shape = [1] * x.ndim
    shape[axis] = x.shape[axis]
    n = x.data.size // x.shape[axis]
    if training:
        mu = x.data.mean(axis=red, keepdims=True)
        var = x.data.var(axis=red, keepdims=True)
        running_mean *= 1 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1 - momentum
        running_var += momentum * var.reshape(-1) * (n / max(n - 1, 1))
    else:
        mu = running_mean.reshape(shape)
        var = running_var.reshape(shape)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    g_ = gamma.data.reshape(shape)
    out = xhat * g_ + beta.data.reshape(shape)

    def back(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=red))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=red))
        if x.requires_grad:
            dxhat = g * g_
            if training:
                gx = inv / n * (n * dxhat - dxhat.sum(axis=red, keepdims=True)
                                - xhat * (dxhat * xhat).sum(axis=red, keepdims=True))
            else:
                gx = dxhat * inv
            x.accumulate(gx)

    return node(out, (x, gamma, beta), back)


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or when ``p == 0``."""
    if not training or p <= 0:
        return x
    if p >= 1:
        raise ValueError("dropout probability must be below 1")
    mask = ((rng.random(x.shape) >= p) / (1.0 - p)).astype(x.data.dtype)
    return node(x.data * mask, (x,), lambda g: x.accumulate(g * mask))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"labels must lie in [0, {K})")
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(B), labels].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(B), labels] -= 1.0
        logits.accumulate(p * (g / B))

    return node(np.asarray(loss), (logits,), back)


def _chamfer_one(x, y, variant):
    """Value and gradients (w.r.t. x and y) of the symmetric Chamfer distance."""
    d_xy, i_xy = nearest(x, y)
    d_yx, i_yx = nearest(y, x)
    M, K = len(x), len(y)
    diff_xy = x - y[i_xy]
    diff_yx = y - x[i_yx]
    if variant == "L1":
        value = d_xy.mean() + d_yx.mean()
        with np.errstate(invalid="ignore", divide="ignore"):
            u_xy = np.where(d_xy[:, None] > 0, diff_xy / d_xy[:, None], 0.0) / M
            u_yx = np.where(d_yx[:, None] > 0, diff_yx / d_yx[:, None], 0.0) / K
    else:
        value = (d_xy**2).mean() + (d_yx**2).mean()
        u_xy = 2 * diff_xy / M
        u_yx = 2 * diff_yx / K
    gx = u_xy.copy()
    np.add.at(gx, i_yx, -u_yx)
    gy = u_yx.copy()
    np.add.at(gy, i_xy, -u_xy)
    return value, gx, gy


def chamfer_loss(pred: Tensor, target, variant: str = "L1") -> Tensor:
    """Batch-mean symmetric Chamfer distance between ``(B, M, 3)`` and ``(B, K, 3)`` clouds.

    ``target`` may be a list of clouds with different sizes.
    """
    if variant not in ("L1", "L2"):
        raise ValueError(f"unknown Chamfer variant {variant!r}")
    target_t = target if isinstance(target, Tensor) else None
    targets = target.data if target_t is not None else target
    single = pred.ndim == 2
    P = pred.data[None] if single else pred.data
    T = [targets] if single else list(targets)
    if len(T) != len(P):
        raise ValueError("prediction and target batch sizes differ")
    total, gp, gt = 0.0, np.zeros_like(P), []
    for b, (x, y) in enumerate(zip(P, T)):
        v, gx, gy = _chamfer_one(x, np.asarray(y, dtype=np.float64), variant)
        total += v
        gp[b] = gx
        gt.append(gy)
    B = len(P)

    def back(g):
        if pred.requires_grad:
            pred.accumulate((gp[0] if single else gp) * (g / B))
        if target_t is not None and target_t.requires_grad:
            gts = gt[0] if single else np.stack(gt)
            target_t.accumulate(gts * (g / B))

    parents = (pred,) if target_t is None else (pred, target_t)
    return node(np.asarray(total / B), parents, back)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid 1-D cross-correlation. ``x`` is ``(B, C, L)``, ``weight`` ``(O, C, k)``."""
    B, C, L = x.shape
    O, _, k = weight.shape
    out = conv2d(reshape(x, (B, C, 1, L)), reshape(weight, (O, weight.shape[1], 1, k)), bias, stride)
    return reshape(out, (B, O, out.shape[-1]))
