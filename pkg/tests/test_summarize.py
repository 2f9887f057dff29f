from __future__ import annotations

import dendropy
import numpy as np
import pytest

from phylnet.domain.entities import PosteriorSample
from phylnet.domain.summarize import (
    TreeSampleSet,
    consensus,
    credible_interval,
    credible_radius,
    densitree_export,
    diagnostics,
    distance_summary,
    effective_sample_size,
    get_metric,
    potential_scale_reduction,
)
from phylnet.domain.treecore import (
    InvalidTreeError,
    LeafSetMismatchError,
    from_newick,
    rf_distance,
    sample_yule_tree,
    splits,
    validate,
)

AB_C = "((A:0.4,B:0.4):0.6,C:1);"
AC_B = "((A:0.2,C:0.2):0.8,B:1);"
BC_A = "((B:0.5,C:0.5):0.5,A:1);"
BALANCED = "((A:0.5,B:0.5):0.5,(C:0.5,D:0.5):0.5);"
OPPOSITE = "((A:0.5,C:0.5):0.5,(B:0.5,D:0.5):0.5);"


def test_consensus_keeps_majority_split():
    samples = TreeSampleSet.from_newick([AB_C, "((A:0.6,B:0.6):0.4,C:1);", AC_B])
    tree = consensus(samples, p=0.6)
    assert tree.splits == {frozenset("AB")}
    assert tree.supports[frozenset("AB")] == pytest.approx(2 / 3)
    ab = next(node for node in tree.nodes() if node.clade == frozenset("AB"))
    assert ab.age == pytest.approx(0.5)
    assert tree.is_binary


def test_consensus_of_conflicting_trees_is_a_star():
    tree = consensus(TreeSampleSet.from_newick([AB_C, AC_B, BC_A]), p=0.5)
    assert tree.splits == set()
    assert not tree.is_binary
    assert tree.to_newick() == "(A:1.0,B:1.0,C:1.0);"
    with pytest.raises(InvalidTreeError):
        tree.to_tree()


def test_consensus_of_identical_trees_is_the_tree(rng):
    original = sample_yule_tree(7, 1.0, rng)
    tree = consensus(TreeSampleSet((original,) * 5), p=0.8)
    assert tree.splits == splits(original)
    assert set(tree.supports.values()) == {1.0}
    rebuilt = tree.to_tree()
    assert rf_distance(rebuilt, original) == 0


def test_consensus_newick_carries_support():
    tree = consensus(TreeSampleSet.from_newick([AB_C, AB_C]), p=0.5)
    assert tree.to_newick() == "((A:0.4,B:0.4)[&support=1.0]:0.6,C:1.0);"
    assert tree.to_newick(support=False) == AB_C.replace("C:1", "C:1.0")


def test_consensus_ages_increase_from_parent_to_child():
    # AB averages 0.35 over its supporters, ABC averages 0.45 over its own
    samples = TreeSampleSet.from_newick(
        [
            "(((A:0.5,B:0.5):0.3,C:0.8):0.2,D:1.0);",
            "(((A:0.5,B:0.5):0.3,C:0.8):0.2,D:1.0);",
            "((A:0.95,B:0.95):0.05,(C:0.5,D:0.5):0.5);",
            "(((A:0.03,C:0.03):0.02,B:0.05):0.95,D:1.0);",
        ]
    )
    tree = consensus(samples, p=0.5)
    assert tree.splits == {frozenset("AB"), frozenset("ABC")}
    ages = {node.clade: node.age for node in tree.nodes()}
    assert ages[frozenset("ABC")] == pytest.approx(0.45)
    assert ages[frozenset("ABC")] < ages[frozenset("AB")] < 1.0
    rebuilt = tree.to_tree()
    assert validate(rebuilt) is None
    assert splits(rebuilt) == tree.splits


def test_consensus_keeps_awkward_labels(rng):
    labels = ["Left Amygdala", "Right Amygdala", "O'Brien", "x:y", "v_1"]
    trees = tuple(sample_yule_tree(5, 1.0, rng, labels) for _ in range(10))
    tree = consensus(TreeSampleSet(trees), p=0.5)
    text = tree.to_newick()
    assert "'Left Amygdala'" in text and "'O''Brien'" in text
    parsed = dendropy.Tree.get(data=text, schema="newick", preserve_underscores=True)
    assert {leaf.taxon.label for leaf in parsed.leaf_node_iter()} == set(labels)
    if tree.splits:
        assert "[&support=" in text


def test_consensus_splits_are_nested_or_disjoint(rng):
    samples = TreeSampleSet(tuple(sample_yule_tree(8, 1.0, rng) for _ in range(40)))
    for p in (0.5, 0.6, 0.8, 0.95):
        kept = list(consensus(samples, p).splits)
        for first in kept:
            for second in kept:
                assert first <= second or second <= first or not first & second


def test_consensus_threshold_range():
    samples = TreeSampleSet.from_newick([AB_C])
    for p in (0.4, 1.0):
        with pytest.raises(ValueError):
            consensus(samples, p)


def test_sample_set_validation():
    with pytest.raises(ValueError):
        TreeSampleSet(())
    with pytest.raises(LeafSetMismatchError):
        TreeSampleSet.from_newick([AB_C, "((A:0.4,B:0.4):0.6,D:1);"])
    sample = PosteriorSample(chain=0, iteration=1, a=0.0, sigma2=1.0, b=1.0, newick=AB_C)
    assert len(TreeSampleSet.from_samples([sample, sample])) == 2


def test_densitree_export_keeps_topologies(rng):
    labels = ["A", "B", "C", "D", "E"]
    trees = tuple(sample_yule_tree(5, 1.0, rng, labels) for _ in range(6))
    export = densitree_export(TreeSampleSet(trees))
    assert sorted(export.order) == labels
    assert len(export.newick_lines) == 6
    for line, tree in zip(export.newick_lines, trees):
        assert rf_distance(from_newick(line), tree) == 0
    coordinates = export.coordinates
    assert list(coordinates.columns) == ["tree", "node", "parent", "label", "x", "y"]
    assert len(coordinates) == 6 * 9
    leaves = coordinates[coordinates["label"] != ""]
    assert set(leaves["x"]) == {1.0}
    for label, y in zip(leaves["label"], leaves["y"]):
        assert y == export.order.index(label)


def test_densitree_export_with_explicit_order():
    export = densitree_export(TreeSampleSet.from_newick([BALANCED]), order=["D", "C", "B", "A"])
    assert export.newick_lines[0] == "((D:0.5,C:0.5):0.5,(B:0.5,A:0.5):0.5);"
    assert export.newick_text().endswith(";\n")


def test_credible_radius_examples():
    truth = from_newick(BALANCED)
    samples = TreeSampleSet.from_newick([BALANCED] * 9 + [OPPOSITE])
    assert credible_radius(samples, truth, level=0.9) == 0.0
    assert credible_radius(samples, truth, level=0.95) == 1.0
    assert credible_radius(samples, truth, level=0.01) == 0.0
    summary = distance_summary(samples, truth)
    assert summary["mean"] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        credible_radius(samples, truth, level=0.0)


def test_unknown_metric():
    assert get_metric("rf")(from_newick(BALANCED), from_newick(OPPOSITE)) == 1.0
    with pytest.raises(ValueError):
        get_metric("spr")


def test_effective_sample_size_of_independent_draws(rng):
    trace = rng.normal(size=100_000)
    assert effective_sample_size(trace) == pytest.approx(100_000, rel=0.2)


def test_effective_sample_size_of_autocorrelated_draws(rng):
    phi = 0.9
    noise = rng.normal(size=100_000)
    trace = np.empty_like(noise)
    trace[0] = noise[0]
    for i in range(1, noise.size):
        trace[i] = phi * trace[i - 1] + noise[i]
    expected = noise.size * (1 - phi) / (1 + phi)
    assert effective_sample_size(trace) == pytest.approx(expected, rel=0.3)


def test_potential_scale_reduction(rng):
    chain = rng.normal(size=10_000)
    assert potential_scale_reduction([chain, chain.copy()]) == pytest.approx(1.0, abs=0.01)
    shifted = [rng.normal(size=2000), rng.normal(loc=3.0, size=2000)]
    assert potential_scale_reduction(shifted) > 1.1
    with pytest.raises(ValueError):
        potential_scale_reduction([chain])


def test_credible_interval_of_standard_normal(rng):
    lower, upper = credible_interval(rng.normal(size=100_000), 0.9)
    assert lower == pytest.approx(-1.645, abs=0.03)
    assert upper == pytest.approx(1.645, abs=0.03)


def test_diagnostics_report(rng):
    report = diagnostics({"a": [rng.normal(size=200), rng.normal(size=200)], "b": [rng.normal(size=50)]})
    payload = report.to_dict()
    assert payload["levels"] == [0.5, 0.9, 0.95]
    assert payload["parameters"]["a"]["rhat"] is not None
    assert payload["parameters"]["b"]["rhat"] is None
    assert payload["parameters"]["a"]["pooled"]["n"] == 400
    assert set(payload["parameters"]["b"]["pooled"]["intervals"]) == {"0.5", "0.9", "0.95"}
