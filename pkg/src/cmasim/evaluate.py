"""Recall of the fixed-radius Hamming search against exact cosine top-N."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .ledger import CostLedger
from .pipeline import Simulator


@dataclass(frozen=True)
class RecallRow:
    theta: int
    mean_candidates: float
    mean_recall: float


def evaluate_recall(sim: Simulator, thetas, queries: int = 50, top_n: int = 10,
                    noise: float = 0.3, seed: int = 0) -> list[RecallRow]:
    """Sweep the search radius over user vectors drawn near stored items."""
    item = sim.work.item_table
    if item is None:
        raise ValueError("workload has no item table")
    items = sim.data[item.id].dequantized()
    rng = np.random.default_rng(seed)
    users = items[rng.integers(0, len(items), size=queries)]
    users = users + noise * rng.standard_normal(users.shape)
    exact = [oracle.exact_cosine_topN(items, u, top_n) for u in users]
    saved = sim.fabric.ledger
    rows = []
    try:
        for theta in thetas:
            counts, recalls = [], []
            for u, ex in zip(users, exact):
                sim.fabric.ledger = CostLedger()
                cand = sim.nns_candidates(u, int(theta))
                counts.append(len(cand))
                recalls.append(oracle.recall(cand, ex, top_n))
            rows.append(RecallRow(int(theta), float(np.mean(counts)), float(np.mean(recalls))))
    finally:
        sim.fabric.ledger = saved
    return rows


def render(rows: list[RecallRow], top_n: int) -> str:
    lines = [f"{'theta':>6}{'candidates':>12}{f'recall@{top_n}':>12}"]
    lines += [f"{r.theta:6d}{r.mean_candidates:12.1f}{r.mean_recall:12.3f}" for r in rows]
    return "\n".join(lines) + "\n"
