"""Loop-based reference for refinement and the noisy-sphere protocol shared by tests."""

import numpy as np


def reference_refine(points, labels, m, k, n):
    labels = [int(v) for v in labels]
    counts = {}
    for v in labels:
        counts[v] = counts.get(v, 0) + 1
    mode = min(counts, key=lambda v: (-counts[v], v))
    labels = [mode if counts[v] < m else v for v in labels]
    pts = np.asarray(points, dtype=np.float64)
    neighbours = []
    for i, p in enumerate(pts):
        d = [(float(np.sum((p - q) ** 2)), j) for j, q in enumerate(pts) if j != i]
        d.sort()
        neighbours.append([j for _, j in d[:k]])
    for _ in range(n):
        new = []
        for i, nb in enumerate(neighbours):
            tally = {}
            for j in nb:
                tally[labels[j]] = tally.get(labels[j], 0) + 1
            top = max(tally.values())
            if tally.get(labels[i], 0) == top:
                new.append(labels[i])
            else:
                new.append(min(v for v, c in tally.items() if c == top))
        labels = new
    return np.array(labels)


def noisy_sphere(seed, n=100, noise=0.3, n_classes=9):
    """Uniform points on the unit sphere, label 0 below the equator and 1 above.

    ``noise * n`` points get a wrong label drawn uniformly from the other classes.
    Returns ``(points, truth, noisy, corrupted_indices)``.
    """
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    truth = (pts[:, 2] > 0).astype(np.int64)
    noisy = truth.copy()
    corrupted = rng.choice(n, int(round(noise * n)), replace=False)
    for i in corrupted:
        noisy[i] = rng.choice([c for c in range(n_classes) if c != truth[i]])
    return pts, truth, noisy, corrupted


def restored_fraction(seed, cfg):
    from tapsense.refine import refine
    pts, truth, noisy, corrupted = noisy_sphere(seed)
    out = refine(pts, noisy, cfg)
    return float(np.mean(out[corrupted] == truth[corrupted]))
