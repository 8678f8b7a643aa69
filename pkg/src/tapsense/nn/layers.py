"""Parameterised layers with train/eval modes and flat state dictionaries."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor


class Module:
    training = True

    def children(self):
        return [(k, v) for k, v in vars(self).items() if isinstance(v, Module)]

    def own_parameters(self):
        return [(k, v) for k, v in vars(self).items() if isinstance(v, Tensor) and v.requires_grad]

    def own_buffers(self):
        return [(k, v) for k, v in vars(self).items() if k.startswith("running_")]

    def named_parameters(self, prefix=""):
        out = [(prefix + k, v) for k, v in self.own_parameters()]
        for name, child in self.children():
            out += child.named_parameters(f"{prefix}{name}.")
        return out

    def named_buffers(self, prefix=""):
        out = [(prefix + k, v) for k, v in self.own_buffers()]
        for name, child in self.children():
            out += child.named_buffers(f"{prefix}{name}.")
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self) -> dict:
        state = {k: p.data.copy() for k, p in self.named_parameters()}
        state.update({k: b.copy() for k, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        extra = set(state) - (set(params) | set(buffers))
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if p.data.shape != np.shape(state[k]):
                raise ValueError(f"{k}: shape {np.shape(state[k])} != {p.data.shape}")
            p.data[...] = state[k]
        for k, b in buffers.items():
            b[...] = state[k]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(shape, fan_in, rng, dtype=np.float64):
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, shape).astype(dtype), requires_grad=True)


def zeros(shape, dtype=np.float64):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Linear(Module):
    """Fully connected over the last axis; also serves as a kernel-size-1 Conv1d on
    channel-last point features."""

    def __init__(self, n_in, n_out, rng, dtype=np.float64):
        self.weight = kaiming_uniform((n_in, n_out), n_in, rng, dtype)
        self.bias = zeros((n_out,), dtype)

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, dtype=np.float64):
        self.stride = stride
        self.weight = kaiming_uniform((c_out, c_in, kernel, kernel), c_in * kernel * kernel, rng, dtype)
        self.bias = zeros((c_out,), dtype)

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride)


class BatchNorm(Module):
    """Batch normalisation over every axis but ``axis``.

    Batches of one sample use the running statistics even in training mode.
    """

    def __init__(self, channels, axis, momentum=0.1, eps=1e-5, dtype=np.float64):
        self.axis, self.momentum, self.eps = axis, momentum, eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = zeros((channels,), dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x):
        batch_stats = self.training and x.shape[0] > 1
        return F.batch_norm(x, self.gamma, self.beta, self.axis, batch_stats,
                            self.running_mean, self.running_var, self.momentum, self.eps)


class Dropout(Module):
    def __init__(self, p, rng):
        if not 0 <= p < 1:
            raise ValueError(f"dropout rate {p} outside [0, 1)")
        self.p, self.rng = p, rng

    def forward(self, x):
        return F.dropout(x, self.p, self.rng, self.training)
