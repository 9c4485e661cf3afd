import math

import numpy as np
from scipy import stats


def sign_flip_pvalue(diffs, resamples: int = 10_000, seed: int = 0) -> float:
    """Two-sided paired permutation test on per-episode differences."""
    d = np.asarray(diffs, dtype=np.float64)
    if len(d) == 0 or not np.any(d):
        return 1.0
    rng = np.random.default_rng(seed)
    observed = abs(d.mean())
    hits = 0
    for start in range(0, resamples, 1000):
        k = min(1000, resamples - start)
        signs = rng.choice((-1.0, 1.0), size=(k, len(d)))
        hits += int(np.sum(np.abs(signs @ d) / len(d) >= observed - 1e-12))
    return (hits + 1) / (resamples + 1)


def paired_t_pvalue(a, b) -> float | None:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or np.all(a - b == (a - b)[0]):
        return None
    p = stats.ttest_rel(a, b).pvalue
    return None if math.isnan(p) else float(p)
