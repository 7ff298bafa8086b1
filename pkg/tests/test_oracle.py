import ast
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

import cmasim.oracle as oracle_mod
from cmasim.oracle import (angular_distance, clustered_items, exact_cosine_topN,
                           exact_hamming_radius, hamming, recall, topk_by_sort)


def test_self_ranked_first():
    items, _ = clustered_items(200, 32, 5, seed=0)
    assert exact_cosine_topN(items, items[17], 1) == [17]


def test_full_permutation():
    items = np.random.default_rng(1).standard_normal((50, 32))
    assert sorted(exact_cosine_topN(items, np.ones(32), 50)) == list(range(50))


def test_matches_independent_sort():
    rng = np.random.default_rng(2)
    items = rng.standard_normal((1000, 32))
    q = rng.standard_normal(32)
    sims = [float(np.dot(i, q) / (np.linalg.norm(i) * np.linalg.norm(q))) for i in items]
    want = sorted(range(1000), key=lambda i: (-sims[i], i))[:25]
    assert exact_cosine_topN(items, q, 25) == want


def test_zero_norm_flagged():
    items = np.ones((3, 32))
    items[1] = 0
    with pytest.raises(ValueError, match="zero-norm"):
        exact_cosine_topN(items, np.ones(32), 2)


def test_hamming_radius_examples():
    rng = np.random.default_rng(3)
    sigs = rng.integers(0, 2, (100, 256))
    assert 4 in exact_hamming_radius(sigs, sigs[4], 0)
    assert exact_hamming_radius(sigs, sigs[0], 256) == set(range(100))
    q = rng.integers(0, 2, 256)
    want = {i for i in range(100) if hamming(sigs[i], q) <= 60}
    assert exact_hamming_radius(sigs, q, 60) == want


def test_width_mismatch():
    with pytest.raises(ValueError):
        exact_hamming_radius(np.zeros((2, 8)), np.zeros(9), 1)


def test_recall_examples():
    assert recall([1, 2, 3], [3, 2, 1, 0], 3) == 1.0
    assert recall([7, 8], [0, 1, 2], 2) == 0.0
    with pytest.raises(ValueError):
        recall([1], [1], 2)


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40), st.data())
def test_topk_by_sort(values, data):
    k = data.draw(st.integers(0, len(values)))
    got = topk_by_sort(values, k)
    assert sorted(values, reverse=True)[:k] == [values[i] for i in got]


def test_angular_distance():
    assert angular_distance([1, 0], [0, 1]) == pytest.approx(np.pi / 2)
    assert angular_distance([1, 0], [-1, 0]) == pytest.approx(np.pi)


def test_oracle_imports_nothing_from_the_simulator():
    tree = ast.parse(Path(oracle_mod.__file__).read_text())
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            assert node.level == 0 and not (node.module or "").startswith("cmasim")
        elif isinstance(node, ast.Import):
            assert all(not a.name.startswith("cmasim") for a in node.names)
