"""Post-hoc smoothing of per-contact material predictions.

Rare labels are first replaced by the object's most frequent label, then
every point repeatedly takes the majority label of its K nearest
neighbours. Updates are synchronous; ties keep the current label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class NoDominantClass(ValueError):
    pass


@dataclass(frozen=True)
class RefineConfig:
    min_occurrence: int = 8  # M
    neighbors: int = 3  # K
    iterations: int = 25  # N

    def __post_init__(self):
        if min(self.min_occurrence, self.neighbors, self.iterations) < 1:
            raise ValueError("min_occurrence, neighbors and iterations must all be at least 1")


@dataclass
class RefineResult:
    labels: np.ndarray
    filtered: int  # labels changed by the occurrence filter
    changes: list  # labels changed per voting round


def filter_rare(labels, min_occurrence: int) -> np.ndarray:
    """Reassign labels occurring fewer than ``min_occurrence`` times to the mode (ties: lowest label)."""
    labels = np.asarray(labels, dtype=np.int64)
    values, counts = np.unique(labels, return_counts=True)
    if counts.max() < min_occurrence:
        raise NoDominantClass(f"no label occurs {min_occurrence} times (largest count {counts.max()})")
    mode = values[np.argmax(counts)]
    rare = values[counts < min_occurrence]
    return np.where(np.isin(labels, rare), mode, labels)


def neighbor_table(points, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points of each point, shape ``(n, k)``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least two points for neighbour voting")
    k = min(k, n - 1)
    _, idx = cKDTree(pts).query(pts, k=k + 1)
    idx = idx.reshape(n, k + 1)
    not_self = idx != np.arange(n)[:, None]
    # move self (wherever duplicates put it) to the end, keep distance order otherwise
    order = np.argsort(~not_self, axis=1, kind="stable")
    return np.take_along_axis(idx, order, axis=1)[:, :k]


def vote(labels, neighbors) -> np.ndarray:
    """One synchronous majority round over the neighbour table."""
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = int(labels.max()) + 1
    counts = np.zeros((len(labels), n_labels), dtype=np.int64)
    rows = np.repeat(np.arange(len(labels)), neighbors.shape[1])
    np.add.at(counts, (rows, labels[neighbors].reshape(-1)), 1)
    best = counts.max(axis=1)
    keep = counts[np.arange(len(labels)), labels] == best
    return np.where(keep, labels, counts.argmax(axis=1))


def refine_detailed(points, labels, cfg: RefineConfig = RefineConfig()) -> RefineResult:
    labels = np.asarray(labels, dtype=np.int64)
    pts = points.points if hasattr(points, "points") else np.asarray(points, dtype=np.float64)
    if len(labels) != len(pts):
        raise ValueError(f"{len(labels)} labels for {len(pts)} points")
    if len(labels) == 0:
        raise NoDominantClass("no predictions to refine")
    current = filter_rare(labels, cfg.min_occurrence)
    filtered = int(np.sum(current != labels))
    changes = []
    if len(pts) >= 2:
        table = neighbor_table(pts, cfg.neighbors)
        for _ in range(cfg.iterations):
            nxt = vote(current, table)
            changes.append(int(np.sum(nxt != current)))
            if changes[-1] == 0:
                # fixed point: further rounds are identical
                changes += [0] * (cfg.iterations - len(changes))
                break
            current = nxt
    return RefineResult(current, filtered, changes)


def refine(points, labels, cfg: RefineConfig = RefineConfig()) -> np.ndarray:
    return refine_detailed(points, labels, cfg).labels
