import numpy as np
import pytest

from oracles import random_tree
from seqreject import (
    HypothesisTree,
    check_monotonicity,
    check_single_step_bound,
    run,
    tree_basic,
    tree_improved,
    tree_improved_II,
    tree_shaffer,
    tree_shaffer_improved,
)

A = 0.05

# perfect binary tree with 7 nodes, breadth-first ids 0..6, leaves 3..6
NON_DOMINANCE = {
    # pair-count variant rejects more
    "shaffer_wins": [0.028, 0.093, 0.002, 0.066, 0.008, 0.018, 0.422],
    # rejected-subgraph variant rejects more
    "improved_II_wins": [0.001, 0.031, 0.017, 0.415, 0.046, 0.001, 0.051],
}


def test_structure(fig_tree):
    assert fig_tree.n == 15
    assert fig_tree.n_leaves == 8
    assert fig_tree.leaf_count[0] == 8
    assert fig_tree.leaf_count[1] == 4
    assert fig_tree.is_symmetric_binary


def test_symmetry_detection():
    assert not HypothesisTree(["a", "b", "c"], {"b": "a", "c": "b"}).is_symmetric_binary
    lopsided = HypothesisTree(list("abcde"), {"b": "a", "c": "a", "d": "b", "e": "b"})
    assert not lopsided.is_symmetric_binary
    assert not HypothesisTree(["a"], {}).is_symmetric_binary
    with pytest.raises(ValueError, match="symmetric"):
        tree_shaffer(lopsided)


def test_cycle_rejected():
    with pytest.raises(ValueError, match="cycle"):
        HypothesisTree(["a", "b"], {"a": "b", "b": "a"})


def test_basic_levels(fig_tree):
    s = tree_basic(fig_tree)
    assert s.alpha(0, 0, A) == pytest.approx(A)
    assert s.alpha(1, 0b1, A) == pytest.approx(A / 2)
    assert s.alpha(3, 0b11, A) == pytest.approx(A / 4)
    assert s.alpha(7, 0b1011, A) == pytest.approx(A / 8)
    assert s.alpha(1, 0, A) == 0


def test_improved_counts_unrejected_leaves(fig_tree):
    # root, both children, node 3 and its leaves 7 and 8
    R = sum(1 << h for h in (0, 1, 2, 3, 7, 8))
    assert tree_improved(fig_tree).alpha(4, R, A) == pytest.approx(A * 2 / 6)
    assert tree_improved(fig_tree).alpha(0, 0, A) == tree_basic(fig_tree).alpha(0, 0, A)


def test_shaffer_values(fig_tree):
    chain = 0b1011  # root, node 1, node 3
    assert tree_shaffer(fig_tree).alpha(7, chain, A) == pytest.approx(A / 4)
    assert tree_shaffer(fig_tree).alpha(3, 0b11, A) == pytest.approx(A / 4)
    # leaf pairs (7,8) and (9,10) fully rejected: two of four left
    R = sum(1 << h for h in (0, 1, 2, 3, 4, 5, 7, 8, 9, 10))
    assert tree_shaffer_improved(fig_tree).alpha(11, R, A) == pytest.approx(A / 2)


def test_improved_II(fig_tree):
    s = tree_improved_II(fig_tree)
    assert s.alpha(1, 0b1, A) == pytest.approx(A * 4 / 7)
    assert tree_improved(fig_tree).alpha(1, 0b1, A) == pytest.approx(A * 4 / 8)
    assert s.alpha(0, 0, A) == pytest.approx(A)


def test_improved_II_equals_improved_on_phi(small_tree):
    structure = small_tree.induced_structure()
    a, b = tree_improved_II(small_tree), tree_improved(small_tree)
    for R in structure.false_sets():
        np.testing.assert_allclose(a.alphas(R, A), b.alphas(R, A))


def test_induced_structure_semantics(small_tree):
    structure = small_tree.induced_structure()
    assert len(structure.atoms) == 16
    leaves = [h for h in range(7) if small_tree.leaves >> h & 1]
    for atom in structure.atoms:
        for h in range(7):
            below = [lf for lf in leaves if small_tree.offspring[h] >> lf & 1] or [h]
            assert bool(atom >> h & 1) == all(atom >> lf & 1 for lf in below)


def test_induced_structure_cap():
    tree = HypothesisTree.perfect_binary(6)  # 32 leaves
    with pytest.raises(ValueError, match="2\\*\\*20"):
        tree.induced_structure()


ALL = [tree_basic, tree_improved, tree_improved_II, tree_shaffer, tree_shaffer_improved]


@pytest.mark.parametrize("make", ALL)
def test_conditions_on_seven_nodes(make, small_tree):
    s = make(small_tree)
    assert check_monotonicity(s).ok
    assert check_single_step_bound(s, small_tree.induced_structure()).ok


@pytest.mark.parametrize("make", [tree_basic, tree_improved, tree_improved_II])
def test_conditions_on_random_forests(make):
    rng = np.random.default_rng(12)
    for _ in range(15):
        labels, parent = random_tree(rng, max_nodes=7)
        tree = HypothesisTree(labels, parent)
        s = make(tree)
        assert check_monotonicity(s).ok
        assert check_single_step_bound(s, tree.induced_structure()).ok


def test_forest_roots_active():
    tree = HypothesisTree(["a", "b", "c"], {"c": "a"})
    assert tree_basic(tree).alpha(1, 0, A) == pytest.approx(A / 2)


def test_non_dominance_witnesses(small_tree):
    sh, ii = tree_shaffer_improved(small_tree), tree_improved_II(small_tree)
    p = NON_DOMINANCE["shaffer_wins"]
    assert run(sh, p, A).final & ~run(ii, p, A).final
    p = NON_DOMINANCE["improved_II_wins"]
    assert run(ii, p, A).final & ~run(sh, p, A).final
