"""Label refinement on a sphere whose hemispheres carry different labels.

Prints how many corrupted labels come back for a few refinement settings and
sphere densities.

    python3 demos/refine_noisy_sphere.py
"""

import numpy as np

from tapsense.refine import RefineConfig, refine


def sphere(seed, n, noise=0.3, n_classes=9):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    truth = (pts[:, 2] > 0).astype(int)
    noisy = truth.copy()
    bad = rng.choice(n, int(round(noise * n)), replace=False)
    for i in bad:
        noisy[i] = rng.choice([c for c in range(n_classes) if c != truth[i]])
    return pts, truth, noisy, bad


for n in (100, 300, 1000):
    for cfg in (RefineConfig(8, 3, 25), RefineConfig(8, 8, 25), RefineConfig(6, 1, 30)):
        restored = []
        for seed in range(20):
            pts, truth, noisy, bad = sphere(seed, n)
            restored.append(np.mean(refine(pts, noisy, cfg)[bad] == truth[bad]))
        print(f"n={n:5d}  M={cfg.min_occurrence} K={cfg.neighbors} N={cfg.iterations}  "
              f"restored {np.mean(restored):.3f}")
