"""Generative sampling of trees, latent features and networks, plus scenario presets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from phylnet.domain.entities import GenerativeScenario, ProbabilityScenario
from phylnet.domain.model import LatentFeatures, NetworkData, TreeCovariance, network_distances
from phylnet.domain.treecore import LeafSetMismatchError, PhyloTree, check, sample_yule_tree

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SimulationResult:
    """Três camadas do processo gerador: árvore, atributos e redes."""

    tree: PhyloTree
    features: LatentFeatures
    data: NetworkData


def scenario_two(V: int = 60, M: int = 30, K: int = 3) -> GenerativeScenario:
    """Tree-structured multiscale scenario (b0=0.6, sigma2_0=0.6, a0=2.6, mu0=0)."""

    return GenerativeScenario(V=V, K=K, M=M, b0=0.6, sigma2_0=0.6, a0=2.6, mu0=0.0)


def block_probability_matrix(V: int, blocks: int = 5, within: float = 0.6, between: float = 0.1) -> np.ndarray:
    """Block-constant edge probabilities with ``blocks`` near-equal communities.

    The defaults are illustrative values for a community-type scenario.
    """

    if blocks < 1 or blocks > V:
        raise ValueError("blocks must lie in [1, V]")
    membership = block_membership(V, blocks)
    P = np.where(membership[:, None] == membership[None, :], within, between).astype(float)
    np.fill_diagonal(P, 0.0)
    return P


def block_membership(V: int, blocks: int = 5) -> np.ndarray:
    """Community of each node; sizes differ by at most one."""

    return np.arange(V) * blocks // V


def scenario_one(V: int = 80, M: int = 10, blocks: int = 5, within: float = 0.6, between: float = 0.1) -> ProbabilityScenario:
    return ProbabilityScenario(M=M, P=block_probability_matrix(V, blocks, within, between))


def sample_features(
    tree: PhyloTree | TreeCovariance,
    labels: tuple[str, ...],
    sigma2: float,
    mu: np.ndarray,
    rng: np.random.Generator,
) -> LatentFeatures:
    """Draw every row of Z from ``N(mu_k 1, sigma2 Sigma)`` through the Cholesky factor."""

    cov = tree if isinstance(tree, TreeCovariance) else TreeCovariance.from_tree(tree, labels)
    mu = np.asarray(mu, dtype=float)
    M, K = mu.shape
    lower = np.tril(cov.cho[0])
    noise = rng.standard_normal((M, K, len(labels)))
    Z = mu[:, :, None] + np.sqrt(sigma2) * np.einsum("ij,mkj->mki", lower, noise)
    return LatentFeatures(Z=Z, mu=mu.copy())


def sample_networks(a: float, features: LatentFeatures, labels: tuple[str, ...], rng: np.random.Generator) -> NetworkData:
    """Independent Bernoulli edges with probability ``expit(a - d_vu)``."""

    return _bernoulli_networks(edge_probabilities(a, features), labels, rng)


def edge_probabilities(a: float, features: LatentFeatures) -> np.ndarray:
    """Per-network ``M x V x V`` edge probabilities with a zero diagonal."""

    probs = expit(a - network_distances(features))
    for m in range(probs.shape[0]):
        np.fill_diagonal(probs[m], 0.0)
    return probs


def _bernoulli_networks(probs: np.ndarray, labels: tuple[str, ...], rng: np.random.Generator) -> NetworkData:
    M, V, _ = probs.shape
    iu = np.triu_indices(V, 1)
    draws = rng.random((M, iu[0].size)) < probs[:, iu[0], iu[1]]
    adjacency = np.zeros((M, V, V), dtype=np.int8)
    adjacency[:, iu[0], iu[1]] = draws
    adjacency[:, iu[1], iu[0]] = draws
    return NetworkData(labels=labels, adjacency=adjacency)


def simulate_generative(spec: GenerativeScenario, rng: np.random.Generator) -> SimulationResult:
    """Tree from the Yule prior (or the fixed tree), then features, then networks."""

    labels = spec.node_labels()
    if spec.tree is not None:
        tree = check(spec.tree)
        if tree.label_set != frozenset(labels):
            raise LeafSetMismatchError("fixed tree leaves differ from the scenario labels")
    else:
        tree = sample_yule_tree(spec.V, spec.b0, rng, labels)
    mu = np.broadcast_to(np.asarray(spec.mu0, dtype=float), (spec.M, spec.K)).copy()
    features = sample_features(tree, labels, spec.sigma2_0, mu, rng)
    data = sample_networks(spec.a0, features, labels, rng)
    LOGGER.debug("Simulated %d networks with pooled density %.4f", data.M, data.density())
    return SimulationResult(tree=tree, features=features, data=data)


def simulate_from_probability_matrix(spec: ProbabilityScenario, rng: np.random.Generator) -> NetworkData:
    """``M`` independent draws of the upper triangle of ``P``, mirrored."""

    P = np.asarray(spec.P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be a square matrix")
    if not np.allclose(P, P.T):
        raise ValueError("P must be symmetric")
    if np.any(np.diag(P) != 0.0):
        raise ValueError("P must have a zero diagonal")
    if np.any((P < 0.0) | (P > 1.0)) or not np.isfinite(P).all():
        raise ValueError("P entries must lie in [0, 1]")
    if spec.M < 1:
        raise ValueError("M must be positive")
    labels = spec.node_labels()
    return _bernoulli_networks(np.broadcast_to(P, (spec.M, *P.shape)), labels, rng)


def expected_edge_probabilities(a: float, features: LatentFeatures) -> np.ndarray:
    """Mean edge-probability matrix across the M networks."""

    return edge_probabilities(a, features).mean(axis=0)


def expected_density(a: float, features: LatentFeatures) -> float:
    """Edge density the simulated networks have in expectation."""

    probs = expected_edge_probabilities(a, features)
    iu = np.triu_indices(probs.shape[0], 1)
    return float(probs[iu].mean()) if iu[0].size else 0.0
