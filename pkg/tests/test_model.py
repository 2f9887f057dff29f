from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from phylnet.domain.entities import Hyperparams
from phylnet.domain.model import (
    DimensionMismatchError,
    LatentFeatures,
    ModelParams,
    NetworkData,
    TreeCovariance,
    bbm_log_prior,
    distance_matrix,
    edge_logit,
    inverse_gamma_logpdf,
    log_posterior,
    log_priors,
    loglik_networks,
    pairwise_scaled_distances,
)
from phylnet.domain.simulate import sample_features
from phylnet.domain.treecore import correlation_matrix, from_newick, sample_yule_tree

CHERRY = from_newick("(v1:1,v2:1);")


def _features(Z, mu=None) -> LatentFeatures:
    Z = np.asarray(Z, dtype=float)
    if mu is None:
        mu = np.zeros(Z.shape[:2])
    return LatentFeatures(Z=Z, mu=mu)


def _oracle_loglik(adjacency: np.ndarray, a: float, Z: np.ndarray) -> float:
    total = 0.0
    for m in range(adjacency.shape[0]):
        V = adjacency.shape[1]
        for v, u in itertools.combinations(range(V), 2):
            p = expit(a - math.dist(Z[m][:, v], Z[m][:, u]))
            total += math.log(p) if adjacency[m, v, u] else math.log1p(-p)
    return total


def test_edge_logit_and_probability_example():
    assert edge_logit(2.6, [0.0], [0.0]) == pytest.approx(2.6)
    assert expit(2.6) == pytest.approx(0.930862, abs=1e-6)


def test_loglik_examples():
    features = _features(np.zeros((1, 1, 2)))
    edge = NetworkData(labels=("v1", "v2"), adjacency=[[0, 1], [1, 0]])
    empty = NetworkData(labels=("v1", "v2"), adjacency=np.zeros((2, 2)))
    assert loglik_networks(edge, 2.6, features) == pytest.approx(math.log(expit(2.6)))
    assert loglik_networks(empty, 2.6, features) == pytest.approx(math.log(1 - expit(2.6)))
    assert loglik_networks(edge, 0.0, features) == pytest.approx(math.log(0.5))


def test_loglik_matches_brute_force(rng):
    for _ in range(50):
        M, K, V = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 7))
        Z = rng.normal(size=(M, K, V))
        upper = np.triu(rng.integers(0, 2, size=(M, V, V)), 1)
        adjacency = upper + upper.transpose(0, 2, 1)
        data = NetworkData(labels=tuple(f"v{i + 1}" for i in range(V)), adjacency=adjacency)
        a = float(rng.normal(1.0, 1.0))
        assert loglik_networks(data, a, _features(Z)) == pytest.approx(_oracle_loglik(adjacency, a, Z), rel=1e-10)


def test_loglik_extreme_logits_stay_finite():
    features = _features(np.array([[[0.0, 1e4]]]))
    edge = NetworkData(labels=("v1", "v2"), adjacency=[[0, 1], [1, 0]])
    value = loglik_networks(edge, 0.0, features)
    assert math.isfinite(value)
    assert value == pytest.approx(-1e4)


def test_loglik_dimension_mismatch():
    data = NetworkData(labels=("v1", "v2"), adjacency=np.zeros((2, 2)))
    with pytest.raises(DimensionMismatchError):
        loglik_networks(data, 0.0, _features(np.zeros((1, 1, 3))))


def test_bbm_log_prior_example():
    features = _features(np.zeros((1, 1, 2)))
    assert bbm_log_prior(features, 1.0, CHERRY) == pytest.approx(-1.837877, abs=1e-6)


def test_bbm_log_prior_matches_dense_oracle(rng):
    tree = sample_yule_tree(6, 1.0, rng)
    labels = tuple(sorted(tree.leaf_labels))
    sigma = correlation_matrix(tree, labels)
    Z = rng.normal(size=(2, 3, 6))
    mu = rng.normal(size=(2, 3))
    sigma2 = 0.7
    expected = sum(
        stats.multivariate_normal.logpdf(Z[m, k], mean=np.full(6, mu[m, k]), cov=sigma2 * sigma)
        for m in range(2)
        for k in range(3)
    )
    assert bbm_log_prior(_features(Z, mu), sigma2, tree, labels) == pytest.approx(expected, rel=1e-7)


def test_bbm_log_prior_is_invariant_to_rotations(rng):
    tree = sample_yule_tree(5, 1.0, rng)
    Z = rng.normal(size=(1, 3, 5))
    rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    rotated = np.einsum("ij,mjv->miv", rotation, Z)
    assert bbm_log_prior(_features(rotated), 0.5, tree) == pytest.approx(bbm_log_prior(_features(Z), 0.5, tree))


def test_bbm_log_prior_rejects_non_positive_variance():
    with pytest.raises(ValueError):
        bbm_log_prior(_features(np.zeros((1, 1, 2))), 0.0, CHERRY)


def test_inverse_gamma_example():
    assert inverse_gamma_logpdf(1.0, 1.0, 1.0) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        inverse_gamma_logpdf(0.0, 1.0, 1.0)


def test_scaled_pairwise_distances_follow_chi_square(rng):
    tree = sample_yule_tree(6, 1.0, rng)
    labels = tuple(sorted(tree.leaf_labels))
    cov = TreeCovariance.from_tree(tree, labels)
    K, sigma2 = 3, 0.6
    features = sample_features(cov, labels, sigma2, np.zeros((4000, K)), rng)
    # first pair only, so draws are independent across networks
    values = np.array([pairwise_scaled_distances(features.Z[m], sigma2, cov.sigma)[0] for m in range(features.M)])
    assert stats.kstest(values, stats.chi2(df=K).cdf).pvalue > 0.001


def _params(rng, V=5, M=2, K=2) -> ModelParams:
    tree = sample_yule_tree(V, 1.0, rng)
    return ModelParams(
        a=1.5,
        sigma2=0.8,
        b=1.2,
        tree=tree,
        features=_features(rng.normal(size=(M, K, V)), rng.normal(size=(M, K))),
    )


def test_log_posterior_is_sum_of_terms(rng):
    params = _params(rng)
    labels = tuple(f"v{i + 1}" for i in range(5))
    upper = np.triu(rng.integers(0, 2, size=(2, 5, 5)), 1)
    data = NetworkData(labels=labels, adjacency=upper + upper.transpose(0, 2, 1))
    hyper = Hyperparams(K=2)
    expected = (
        loglik_networks(data, params.a, params.features)
        + bbm_log_prior(params.features, params.sigma2, params.tree, labels)
        + log_priors(params, hyper)
    )
    assert log_posterior(data, params, hyper) == pytest.approx(expected)
    without = log_posterior(data, params, hyper, likelihood=False)
    assert log_posterior(data, params, hyper) - without == pytest.approx(loglik_networks(data, params.a, params.features))


def test_likelihood_is_translation_invariant(rng):
    params = _params(rng)
    labels = tuple(f"v{i + 1}" for i in range(5))
    data = NetworkData(labels=labels, adjacency=np.ones((5, 5)) - np.eye(5))
    shifted = _features(params.features.Z[:1] + 3.0, params.features.mu[:1] + 3.0)
    original = _features(params.features.Z[:1], params.features.mu[:1])
    assert loglik_networks(data, 1.0, shifted) == pytest.approx(loglik_networks(data, 1.0, original))
    assert bbm_log_prior(shifted, 0.8, params.tree, labels) == pytest.approx(
        bbm_log_prior(original, 0.8, params.tree, labels)
    )


def test_distance_matrix_example():
    Z = np.array([[0.0, 3.0, 0.0], [0.0, 4.0, 1.0]])
    D = distance_matrix(Z)
    assert D[0, 1] == pytest.approx(5.0)
    assert D[0, 2] == pytest.approx(1.0)
    assert np.allclose(D, D.T)
    assert np.all(np.diag(D) == 0.0)


def test_tree_covariance_quadratic_forms(rng):
    tree = sample_yule_tree(5, 1.0, rng)
    cov = TreeCovariance.from_tree(tree)
    rows = rng.normal(size=(3, 5))
    dense = np.linalg.inv(cov.sigma)
    expected = np.einsum("iv,vu,iu->i", rows, dense, rows)
    assert np.allclose(cov.quadratic_forms(rows), expected, rtol=1e-6)
    assert cov.ones_precision_ones == pytest.approx(dense.sum(), rel=1e-6)
