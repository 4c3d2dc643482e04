"""Self-checks of the slow reference oracles the other tests lean on."""

from fractions import Fraction

import numpy as np
import pytest

from aggforest.reference import (
    MAX_ENUMERABLE_PRUNINGS,
    complete_tree,
    enumerate_prunings,
    prior_total,
    pruning_complexity,
    pruning_count,
    smoothed_forecast_regret,
    synthetic_tree,
)


def test_pruning_counts_of_complete_trees():
    # Counts obey c(d) = c(d-1)^2 + 1 with c(0) = 1.
    assert [pruning_count(complete_tree(d)) for d in range(5)] == \
        [1, 2, 5, 26, 677]


def test_enumeration_of_depth_two_tree():
    tree = complete_tree(2)
    root = 0
    l, r = tree.left_child[0], tree.right_child[0]
    ll, lr = tree.left_child[l], tree.right_child[l]
    rl, rr = tree.left_child[r], tree.right_child[r]
    got = {tuple(sorted(p)) for p in enumerate_prunings(tree)}
    want = {
        (root,),
        tuple(sorted((l, r))),
        tuple(sorted((ll, lr, r))),
        tuple(sorted((l, rl, rr))),
        tuple(sorted((ll, lr, rl, rr))),
    }
    assert got == want


def test_complexity_counts_only_non_terminal_leaves():
    tree = complete_tree(2)
    full = max(enumerate_prunings(tree), key=len)
    # 2*4 - 1 nodes, all 4 pruning leaves are leaves of the full tree.
    assert pruning_complexity(tree, full) == 3
    assert pruning_complexity(tree, (0,)) == 1
    l, r = tree.left_child[0], tree.right_child[0]
    # Two leaves, neither terminal: complexity 2*2 - 1 - 0.
    assert pruning_complexity(tree, (int(l), int(r))) == 3


def test_prior_masses_sum_to_one_exactly():
    for depth in range(4):
        assert prior_total(complete_tree(depth)) == Fraction(1)
    rng = np.random.default_rng(70)
    for _ in range(10):
        tree = synthetic_tree(rng, int(rng.integers(1, 9)), "classification")
        assert prior_total(tree) == Fraction(1)


def test_enumeration_guard_refuses_huge_trees():
    big = complete_tree(6)
    assert pruning_count(big) > MAX_ENUMERABLE_PRUNINGS
    with pytest.raises(ValueError, match="prunings"):
        enumerate_prunings(big)


def test_smoothed_forecaster_regret_basics():
    assert smoothed_forecast_regret(np.array([0, 0])) == 0.0
    rng = np.random.default_rng(71)
    for _ in range(50):
        counts = rng.integers(0, 40, size=2)
        regret = smoothed_forecast_regret(counts)
        assert -1e-12 <= regret <= 0.5 + 1e-12


def test_synthetic_tree_structure():
    rng = np.random.default_rng(72)
    for _ in range(15):
        n_leaves = int(rng.integers(1, 10))
        tree = synthetic_tree(rng, n_leaves, "regression", n_bins=16)
        assert tree.n_leaves == n_leaves
        for v in range(tree.n_nodes):
            if tree.feature[v] >= 0:
                assert tree.left_child[v] > v and tree.right_child[v] > v
        # Every bin routes somewhere and every leaf is reachable.
        cells = tree.route(np.arange(16, dtype=np.uint8).reshape(-1, 1))
        assert set(cells.tolist()) == set(np.flatnonzero(tree.is_leaf).tolist())
