"""Brute-force reference computations.

Nothing here imports the fabric, CMA or pipeline code: these are the
independent answers the simulator is checked against.
"""

from __future__ import annotations

import numpy as np


def exact_cosine_topN(items, q, N: int) -> list[int]:
    """Indices of the ``N`` items most cosine-similar to ``q``; ties by index."""
    items = np.asarray(items, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if N > len(items):
        raise ValueError(f"N={N} exceeds {len(items)} items")
    norms = np.linalg.norm(items, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size or np.linalg.norm(q) == 0:
        raise ValueError(f"zero-norm vectors: query={np.linalg.norm(q) == 0}, "
                         f"items={bad.tolist()[:10]}")
    sim = items @ q / (norms * np.linalg.norm(q))
    order = np.lexsort((np.arange(len(items)), -sim))
    return order[:N].tolist()


def hamming(a, b) -> int:
    return int(sum(int(x) != int(y) for x, y in zip(a, b)))


def exact_hamming_radius(sigs, qsig, theta: int) -> set[int]:
    sigs = np.asarray(sigs).astype(np.int64)
    qsig = np.asarray(qsig).astype(np.int64)
    if sigs.ndim != 2 or sigs.shape[1] != qsig.shape[0]:
        raise ValueError("signature widths differ")
    dist = (sigs != qsig[None, :]).sum(axis=1)
    return {int(i) for i in np.flatnonzero(dist <= theta)}


def recall(approx, exact, N: int) -> float:
    exact = list(exact)
    if N > len(exact) or N < 1:
        raise ValueError("N must be in [1, len(exact)]")
    return len(set(approx) & set(exact[:N])) / N


def topk_by_sort(values, k: int) -> list[int]:
    """Indices of the ``k`` largest values, ties to the lower index."""
    values = list(values)
    return sorted(range(len(values)), key=lambda i: (-values[i], i))[:k]


def angular_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def clustered_items(n: int, dim: int, clusters: int, seed: int, spread: float = 0.35):
    """Mixture-of-Gaussians item embeddings with their cluster labels."""
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((clusters, dim))
    labels = rng.integers(0, clusters, size=n)
    return centres[labels] + spread * rng.standard_normal((n, dim)), labels
