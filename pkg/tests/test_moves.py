from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from scipy import stats

from phylnet.domain.moves import (
    MoveKind,
    exchange_subtrees,
    prune_and_regraft,
    propose,
    propose_random,
    swap_tips,
)
from phylnet.domain.treecore import from_newick, rf_distance, sample_yule_tree, splits, validate

LABELS = ["A", "B", "C", "D"]


def _yule_probability(topology: frozenset) -> float:
    return 1 / 9 if all(len(split) == 2 for split in topology) else 1 / 18


def _flat_target_occupancy(kinds: list[MoveKind], rng, records: int = 4000, thin: int = 15) -> Counter:
    """Run a chain that accepts every feasible proposal and count visited topologies."""

    tree = sample_yule_tree(4, 1.0, rng, LABELS)
    counts: Counter = Counter()
    for step in range(records * thin):
        kind = kinds[int(rng.integers(len(kinds)))]
        outcome = propose(tree, kind, rng, age_window=0.3)
        if outcome.feasible:
            tree = outcome.proposed
        if step % thin == thin - 1:
            counts[frozenset(splits(tree))] += 1
    return counts


def _assert_yule_law(counts: Counter) -> None:
    total = sum(counts.values())
    assert len(counts) == 15
    observed = list(counts.values())
    expected = [total * _yule_probability(key) for key in counts]
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_flat_target_chain_with_all_moves_visits_yule_law(rng):
    _assert_yule_law(_flat_target_occupancy(list(MoveKind), rng))


def test_flat_target_chain_with_local_moves_visits_yule_law(rng):
    kinds = [MoveKind.LOCAL_SPR, MoveKind.NODE_AGE_MOVE, MoveKind.TIPS_INTERCHANGE]
    _assert_yule_law(_flat_target_occupancy(kinds, rng))


def test_propose_random_picks_kinds_uniformly(rng):
    tree = sample_yule_tree(6, 1.0, rng)
    draws = 20_000
    counts = Counter(propose_random(tree, rng)[0] for _ in range(draws))
    for kind in MoveKind:
        assert counts[kind] / draws == pytest.approx(0.2, abs=0.015)


@pytest.mark.parametrize("kind", list(MoveKind))
def test_feasible_proposals_are_valid_trees(kind, rng):
    for _ in range(300):
        tree = sample_yule_tree(int(rng.integers(2, 9)), 1.0, rng)
        outcome = propose(tree, kind, rng)
        if outcome.feasible:
            assert validate(outcome.proposed) is None
            assert outcome.proposed.label_set == tree.label_set
        else:
            assert outcome.proposed is tree


def test_node_age_move_changes_exactly_one_age(rng):
    tree = sample_yule_tree(7, 1.0, rng)
    for _ in range(200):
        outcome = propose(tree, MoveKind.NODE_AGE_MOVE, rng)
        if outcome.feasible:
            changed = np.flatnonzero(outcome.proposed.ages != tree.ages)
            assert changed.size <= 1
            assert np.array_equal(outcome.proposed.parent, tree.parent)


def test_tips_interchange_keeps_ages_and_shape(rng):
    tree = sample_yule_tree(6, 1.0, rng)
    outcome = propose(tree, MoveKind.TIPS_INTERCHANGE, rng)
    assert outcome.feasible
    assert np.array_equal(outcome.proposed.ages, tree.ages)
    assert np.array_equal(outcome.proposed.parent, tree.parent)
    assert sum(a != b for a, b in zip(outcome.proposed.leaf_labels, tree.leaf_labels)) == 2


def test_swap_tips_example():
    tree = from_newick("((A:0.4,B:0.4):0.6,C:1.0);")
    swapped = swap_tips(tree, tree.leaf_index("B"), tree.leaf_index("C"))
    assert splits(swapped) == {frozenset("AC")}


def test_exchange_subtrees_example():
    tree = from_newick("((A:0.5,B:0.5):0.5,(C:0.5,D:0.5):0.5);")
    swapped = exchange_subtrees(tree, tree.leaf_index("B"), tree.leaf_index("C"))
    assert validate(swapped) is None
    assert splits(swapped) == {frozenset("AC"), frozenset("BD")}


def test_regraft_onto_sibling_is_identity(rng):
    for _ in range(100):
        tree = sample_yule_tree(int(rng.integers(3, 9)), 1.0, rng)
        for node in range(tree.n_nodes):
            if node == tree.root:
                continue
            assert prune_and_regraft(tree, node, tree.sibling(node)) == tree


def test_two_leaf_tree_moves():
    tree = from_newick("(A:1,B:1);")
    rng = np.random.default_rng(3)
    assert not propose(tree, MoveKind.NODE_AGE_MOVE, rng).feasible
    for kind in (MoveKind.SPR, MoveKind.LOCAL_SPR):
        outcome = propose(tree, kind, rng)
        assert outcome.feasible and outcome.proposed == tree
    outcome = propose(tree, MoveKind.TIPS_INTERCHANGE, rng)
    assert outcome.feasible and rf_distance(outcome.proposed, tree) == 0


def test_propose_rejects_bad_window(rng):
    tree = sample_yule_tree(4, 1.0, rng)
    with pytest.raises(ValueError):
        propose(tree, MoveKind.NODE_AGE_MOVE, rng, age_window=0.0)
