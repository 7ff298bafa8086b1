"""Seeded synthetic embeddings and queries standing in for trained models."""

from __future__ import annotations

import numpy as np

from .config import WorkloadConfig


def gaussian_mixture(n: int, dim: int, clusters: int, rng: np.random.Generator,
                     spread: float = 0.35) -> np.ndarray:
    centres = rng.standard_normal((clusters, dim))
    labels = rng.integers(0, clusters, size=n)
    return centres[labels] + spread * rng.standard_normal((n, dim))


def make_tables(work: WorkloadConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    for t in work.tables:
        if t.is_item_table:
            out[t.id] = gaussian_mixture(t.entries, t.dim, work.clusters, rng)
        else:
            out[t.id] = 0.5 * rng.standard_normal((t.entries, t.dim))
    return out


def make_query_records(work: WorkloadConfig, count: int, seed: int) -> list[dict]:
    """Random queries as plain records (the query-file schema)."""
    rng = np.random.default_rng(seed)
    stages = [s for s in ("filtering", "ranking") if getattr(work, s) is not None]
    dense_width = getattr(work, stages[0]).dense[0] if stages else 0
    records = []
    for _ in range(count):
        sparse = {}
        for t in work.tables:
            n_idx = 1 if t.is_item_table and t.lookups is None else work.lookups(t)
            sparse[t.id] = [int(i) for i in rng.integers(0, t.entries, size=n_idx)]
        records.append({"dense": [round(float(v), 6) for v in rng.standard_normal(dense_width)],
                        "sparse": sparse})
    return records
