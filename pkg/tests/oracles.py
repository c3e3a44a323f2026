"""Independent reference implementations used as test oracles.

These deliberately share no code with the library paths they check.
"""

from itertools import product

import numpy as np


def brute_force_kmeans_optimum(x: np.ndarray, K: int) -> float:
    """Exact minimum clustering objective over all K^n labelings.

    Uses sum ||x_i - c_{lab(i)}||^2 = sum ||x||^2 - sum_k ||s_k||^2 / n_k,
    vectorized over every labeling, so 3^8 instances stay fast.
    """
    n, _ = x.shape
    labelings = np.array(list(product(range(K), repeat=n)))
    onehot = np.eye(K)[labelings]
    counts = onehot.sum(axis=1)
    sums = np.einsum("pnk,nd->pkd", onehot, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_cluster = np.where(counts > 0, (sums**2).sum(axis=2) / counts, 0.0)
    return float(((x**2).sum() - per_cluster.sum(axis=1)).min())


def brute_force_nearest(codes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-point nearest code index by explicit pairwise comparison."""
    out = np.empty(x.shape[0], dtype=np.int64)
    for i, point in enumerate(x):
        best_idx, best_dist = 0, np.inf
        for k, code in enumerate(codes):
            dist = float(np.sum((point - code) ** 2))
            if dist < best_dist:
                best_idx, best_dist = k, dist
        out[i] = best_idx
    return out


def naive_average_accuracy(rows: list[list[float]], t: int) -> float:
    """Direct transcription of the average seen-task accuracy."""
    return sum(rows[t - 1][j] for j in range(t)) / t


def naive_max_forgetting(rows: list[list[float]], t: int) -> float:
    """Direct transcription of the mean maximum forgetting (0 at t=1)."""
    if t == 1:
        return 0.0
    total = 0.0
    for j in range(1, t):  # 1-based past task j
        best = max(rows[tau - 1][j - 1] for tau in range(j, t + 1))
        total += best - rows[t - 1][j - 1]
    return total / (t - 1)


def numeric_gradient(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        hi = fn(x)
        x[idx] = orig - eps
        lo = fn(x)
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * eps)
        it.iternext()
    return g
