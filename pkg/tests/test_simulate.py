from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from phylnet.domain.entities import GenerativeScenario, ProbabilityScenario
from phylnet.domain.model import LatentFeatures
from phylnet.domain.simulate import (
    block_membership,
    block_probability_matrix,
    edge_probabilities,
    expected_density,
    expected_edge_probabilities,
    sample_networks,
    scenario_one,
    scenario_two,
    simulate_from_probability_matrix,
    simulate_generative,
)
from phylnet.domain.treecore import from_newick, validate


def _assert_simple_graphs(adjacency: np.ndarray) -> None:
    assert set(np.unique(adjacency)) <= {0, 1}
    assert np.array_equal(adjacency, adjacency.transpose(0, 2, 1))
    assert not np.diagonal(adjacency, axis1=1, axis2=2).any()


def test_large_intercept_gives_complete_graphs(rng):
    spec = GenerativeScenario(V=6, K=2, M=3, a0=50.0, sigma2_0=0.1)
    result = simulate_generative(spec, rng)
    assert validate(result.tree) is None
    _assert_simple_graphs(result.data.adjacency)
    assert result.data.density() == 1.0


def test_very_negative_intercept_gives_empty_graphs(rng):
    result = simulate_generative(GenerativeScenario(V=6, K=2, M=2, a0=-50.0), rng)
    assert result.data.adjacency.sum() == 0


def test_tree_structured_scenario_shapes(rng):
    spec = scenario_two(V=20, M=5, K=3)
    result = simulate_generative(spec, rng)
    assert result.features.Z.shape == (5, 3, 20)
    assert result.data.adjacency.shape == (5, 20, 20)
    assert result.data.labels == tuple(f"v{i + 1}" for i in range(20))
    assert 0.0 < result.data.density() < 1.0
    _assert_simple_graphs(result.data.adjacency)


def test_edges_match_their_expected_probabilities(rng):
    tree = from_newick("((v1:0.5,v2:0.5):0.5,v3:1);")
    spec = GenerativeScenario(V=3, K=2, M=1, tree=tree)
    features = simulate_generative(spec, rng).features
    replicates = 4000
    probs = expected_edge_probabilities(spec.a0, features)
    counts = sum(sample_networks(spec.a0, features, spec.node_labels(), rng).adjacency[0] for _ in range(replicates))
    for v, u in ((0, 1), (0, 2), (1, 2)):
        low, high = stats.binom.interval(0.999, replicates, probs[v, u])
        assert low <= counts[v, u] <= high


def test_fixed_tree_is_kept(rng):
    tree = from_newick("((A:0.5,B:0.5):0.5,C:1);")
    result = simulate_generative(GenerativeScenario(V=3, K=1, M=1, tree=tree), rng)
    assert result.tree == tree
    assert result.data.labels == ("A", "B", "C")


def test_simulation_is_deterministic_for_a_seed():
    spec = GenerativeScenario(V=8, K=2, M=3)
    first = simulate_generative(spec, np.random.default_rng(11))
    second = simulate_generative(spec, np.random.default_rng(11))
    assert first.tree == second.tree
    assert np.array_equal(first.data.adjacency, second.data.adjacency)


def test_probability_matrix_extremes(rng):
    V = 5
    zeros = simulate_from_probability_matrix(ProbabilityScenario(M=2, P=np.zeros((V, V))), rng)
    assert zeros.adjacency.sum() == 0
    ones = simulate_from_probability_matrix(ProbabilityScenario(M=2, P=np.ones((V, V)) - np.eye(V)), rng)
    assert ones.density() == 1.0
    _assert_simple_graphs(ones.adjacency)


@pytest.mark.parametrize(
    "P",
    [
        np.array([[0.0, 0.2], [0.3, 0.0]]),
        np.array([[0.1, 0.2], [0.2, 0.0]]),
        np.array([[0.0, 1.2], [1.2, 0.0]]),
        np.zeros((2, 3)),
    ],
)
def test_probability_matrix_rejects_invalid_input(P, rng):
    with pytest.raises(ValueError):
        simulate_from_probability_matrix(ProbabilityScenario(M=1, P=P), rng)


def test_block_scenario_density(rng):
    spec = scenario_one(V=20, M=50, blocks=4, within=0.6, between=0.1)
    data = simulate_from_probability_matrix(spec, rng)
    membership = block_membership(20, 4)
    same = membership[:, None] == membership[None, :]
    iu = np.triu_indices(20, 1)
    within = data.adjacency[:, iu[0], iu[1]][:, same[iu]].mean()
    between = data.adjacency[:, iu[0], iu[1]][:, ~same[iu]].mean()
    assert within == pytest.approx(0.6, abs=0.05)
    assert between == pytest.approx(0.1, abs=0.03)
    P = block_probability_matrix(20, 4)
    assert np.all(np.diag(P) == 0.0)


@pytest.mark.parametrize(("V", "blocks", "sizes"), [(6, 5, [2, 1, 1, 1, 1]), (11, 5, [3, 2, 2, 2, 2]), (20, 4, [5, 5, 5, 5])])
def test_block_membership_uses_every_community(V, blocks, sizes):
    membership = block_membership(V, blocks)
    assert len(set(membership.tolist())) == blocks
    assert sorted(np.bincount(membership).tolist(), reverse=True) == sizes
    assert np.all(np.diff(membership) >= 0)


def test_edge_probabilities_for_coincident_nodes():
    features = LatentFeatures(Z=np.zeros((2, 1, 3)), mu=np.zeros((2, 1)))
    probs = edge_probabilities(2.6, features)
    assert probs.shape == (2, 3, 3)
    assert probs[1, 0, 2] == pytest.approx(0.930862, abs=1e-6)
    assert np.all(probs[:, [0, 1, 2], [0, 1, 2]] == 0.0)
    assert expected_density(2.6, features) == pytest.approx(0.930862, abs=1e-6)


def test_expected_density_tracks_simulated_density(rng):
    spec = GenerativeScenario(V=12, K=2, M=40)
    result = simulate_generative(spec, rng)
    assert result.data.density() == pytest.approx(expected_density(spec.a0, result.features), abs=0.04)
