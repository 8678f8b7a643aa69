"""Versioned binary checkpoints.

Layout: 4-byte magic, u32 version, u32 header length, UTF-8 JSON header,
then each array's raw little-endian bytes in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .models import architecture_hash

MAGIC = b"TSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model, epoch: int = 0, metric: float = float("nan"), extra=None) -> None:
    state = model.state_dict()
    entries, blobs = [], []
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name])
        dt = arr.dtype.newbyteorder("<")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dt.str})
        blobs.append(arr.astype(dt).tobytes())
    header = {"arch": type(model).__name__, "arch_hash": architecture_hash(model), "epoch": int(epoch),
              "metric": float(metric), "extra": extra or {}, "tensors": entries}
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(raw)) + raw)
        for b in blobs:
            fh.write(b)


def read_checkpoint(path):
    """Return ``(header, state)`` without needing a model."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, n = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + n].decode())
    offset = 12 + n
    state = {}
    for e in header["tensors"]:
        dt = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        end = offset + count * dt.itemsize
        if end > len(data):
            raise CheckpointError(f"{path}: truncated at tensor {e['name']}")
        state[e["name"]] = np.frombuffer(data[offset:end], dtype=dt).reshape(e["shape"]).copy()
        offset = end
    return header, state


def load_checkpoint(path, model):
    """Load weights into ``model`` after checking the architecture hash; returns the header."""
    header, state = read_checkpoint(path)
    if header["arch_hash"] != architecture_hash(model):
        raise CheckpointError(f"{path}: architecture {header['arch']}/{header['arch_hash']} does not match "
                              f"{type(model).__name__}/{architecture_hash(model)}")
    model.load_state_dict(state)
    return header
