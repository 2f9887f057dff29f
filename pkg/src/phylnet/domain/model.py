"""Densities of the phylogenetic latent space network model.

Edges follow a logistic latent space likelihood ``logit P(y_vu = 1) = a - |z_v - z_u|``
and every row of the K x V feature matrix of network m is Gaussian with mean
``mu_k 1`` and covariance ``sigma2 * Sigma`` where ``Sigma`` holds MRCA ages of
the tree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, stats
from scipy.spatial.distance import pdist, squareform

from phylnet.domain.entities import Hyperparams
from phylnet.domain.treecore import LeafSetMismatchError, PhyloTree, correlation_matrix, yule_log_density

LOGGER = logging.getLogger(__name__)

CHOLESKY_JITTER = 1e-10
_LOG_2PI = math.log(2.0 * math.pi)


class DimensionMismatchError(ValueError):
    """Arrays of networks, features and labels disagree in shape."""


@dataclass(frozen=True, slots=True)
class NetworkData:
    """M redes binárias simétricas sobre os mesmos V nós."""

    labels: tuple[str, ...]
    adjacency: np.ndarray

    def __post_init__(self) -> None:
        adjacency = np.asarray(self.adjacency)
        if adjacency.ndim == 2:
            adjacency = adjacency[None, :, :]
        adjacency = adjacency.astype(np.int8)
        adjacency.setflags(write=False)
        object.__setattr__(self, "adjacency", adjacency)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def M(self) -> int:
        return int(self.adjacency.shape[0])

    @property
    def V(self) -> int:
        return int(self.adjacency.shape[1])

    def density(self, m: Optional[int] = None) -> float:
        """Edge density of network ``m`` (all networks pooled when omitted)."""

        iu = np.triu_indices(self.V, 1)
        block = self.adjacency if m is None else self.adjacency[m : m + 1]
        return float(block[:, iu[0], iu[1]].mean()) if iu[0].size else 0.0


@dataclass(slots=True)
class LatentFeatures:
    """Atributos latentes Z (M x K x V) e centros mu (M x K)."""

    Z: np.ndarray
    mu: np.ndarray

    def __post_init__(self) -> None:
        self.Z = np.array(self.Z, dtype=float)
        self.mu = np.array(self.mu, dtype=float).reshape(self.Z.shape[0], self.Z.shape[1])

    @property
    def M(self) -> int:
        return int(self.Z.shape[0])

    @property
    def K(self) -> int:
        return int(self.Z.shape[1])

    @property
    def V(self) -> int:
        return int(self.Z.shape[2])

    def centered(self) -> np.ndarray:
        return self.Z - self.mu[:, :, None]

    def copy(self) -> "LatentFeatures":
        return LatentFeatures(Z=self.Z.copy(), mu=self.mu.copy())


@dataclass(slots=True)
class ModelParams:
    """Estado completo dos parâmetros do modelo."""

    a: float
    sigma2: float
    b: float
    tree: PhyloTree
    features: LatentFeatures

    def __post_init__(self) -> None:
        if not self.sigma2 > 0 or not self.b > 0:
            raise ValueError("sigma2 and b must be positive")


@dataclass(frozen=True, slots=True)
class TreeCovariance:
    """Cholesky-based cache of the tree correlation matrix in data-label order."""

    tree: PhyloTree
    labels: tuple[str, ...]
    sigma: np.ndarray
    jitter: float
    cho: tuple[np.ndarray, bool]
    logdet: float
    precision: np.ndarray
    precision_ones: np.ndarray
    ones_precision_ones: float

    @classmethod
    def from_tree(cls, tree: PhyloTree, labels: Optional[Sequence[str]] = None) -> "TreeCovariance":
        labels = tuple(tree.leaf_labels if labels is None else labels)
        sigma = correlation_matrix(tree, labels)
        jittered = sigma + CHOLESKY_JITTER * np.eye(len(labels))
        try:
            cho = linalg.cho_factor(jittered, lower=True)
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("tree correlation matrix is numerically singular") from exc
        logdet = 2.0 * float(np.log(np.diag(cho[0])).sum())
        precision = linalg.cho_solve(cho, np.eye(len(labels)))
        precision = 0.5 * (precision + precision.T)
        precision_ones = precision.sum(axis=1)
        return cls(
            tree=tree,
            labels=labels,
            sigma=sigma,
            jitter=CHOLESKY_JITTER,
            cho=cho,
            logdet=logdet,
            precision=precision,
            precision_ones=precision_ones,
            ones_precision_ones=float(precision_ones.sum()),
        )

    def quadratic_forms(self, rows: np.ndarray) -> np.ndarray:
        """``r' Sigma^-1 r`` for every row of ``rows`` (shape ... x V)."""

        flat = rows.reshape(-1, rows.shape[-1])
        solved = linalg.cho_solve(self.cho, flat.T)
        return np.einsum("ij,ji->i", flat, solved).reshape(rows.shape[:-1])


def _covariance_for(tree_or_cov: PhyloTree | TreeCovariance, labels: Optional[Sequence[str]]) -> TreeCovariance:
    if isinstance(tree_or_cov, TreeCovariance):
        return tree_or_cov
    return TreeCovariance.from_tree(tree_or_cov, labels)


# ---------------------------------------------------------------------------
# Likelihood


def edge_logit(a: float, zv: np.ndarray, zu: np.ndarray) -> float:
    return float(a - np.linalg.norm(np.asarray(zv, dtype=float) - np.asarray(zu, dtype=float)))


def distance_matrix(Z: np.ndarray) -> np.ndarray:
    """Euclidean distances between the columns of a K x V matrix."""

    Z = np.asarray(Z, dtype=float)
    return squareform(pdist(Z.T))


def network_distances(features: LatentFeatures) -> np.ndarray:
    return np.stack([distance_matrix(features.Z[m]) for m in range(features.M)])


def bernoulli_loglik(y: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Elementwise Bernoulli log-pmf with success log-odds ``logits``."""

    y = np.asarray(y)
    logits = np.asarray(logits, dtype=float)
    return np.where(y > 0, -np.logaddexp(0.0, -logits), -np.logaddexp(0.0, logits))


def loglik_from_distances(adjacency: np.ndarray, a: float, distances: np.ndarray) -> float:
    V = adjacency.shape[-1]
    iu = np.triu_indices(V, 1)
    return float(bernoulli_loglik(adjacency[:, iu[0], iu[1]], a - distances[:, iu[0], iu[1]]).sum())


def loglik_networks(data: NetworkData, a: float, features: LatentFeatures) -> float:
    """Bernoulli log-likelihood summed over networks and unordered node pairs."""

    if features.M != data.M or features.V != data.V:
        raise DimensionMismatchError(
            f"features are {features.M}x{features.V} but data has M={data.M}, V={data.V}"
        )
    return loglik_from_distances(data.adjacency, a, network_distances(features))


# ---------------------------------------------------------------------------
# Priors


def bbm_log_prior(
    features: LatentFeatures,
    sigma2: float,
    tree: PhyloTree | TreeCovariance,
    labels: Optional[Sequence[str]] = None,
) -> float:
    """Gaussian log density of every feature row under ``N(mu_k 1, sigma2 Sigma)``."""

    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    cov = _covariance_for(tree, labels)
    V = len(cov.labels)
    if features.V != V:
        raise DimensionMismatchError(f"features have V={features.V}, tree has {V} leaves")
    rows = features.M * features.K
    if rows == 0:
        return 0.0
    quad = float(cov.quadratic_forms(features.centered()).sum())
    return -0.5 * rows * (V * (_LOG_2PI + math.log(sigma2)) + cov.logdet) - 0.5 * quad / sigma2


def inverse_gamma_logpdf(x: float, alpha: float, beta: float) -> float:
    if not x > 0:
        raise ValueError("inverse-gamma support is (0, inf)")
    return float(stats.invgamma.logpdf(x, alpha, scale=beta))


def log_priors(params: ModelParams, hyper: Hyperparams) -> float:
    """Sum of the priors of a, sigma2, mu, the tree given b, and b."""

    if not params.sigma2 > 0 or not params.b > 0:
        raise ValueError("sigma2 and b must be positive")
    total = float(stats.norm.logpdf(params.a, 0.0, math.sqrt(hyper.sigma_a2)))
    total += inverse_gamma_logpdf(params.sigma2, hyper.alpha_sigma, hyper.beta_sigma)
    total += float(stats.norm.logpdf(params.features.mu, 0.0, math.sqrt(hyper.sigma_mu2)).sum())
    total += yule_log_density(params.tree, params.b)
    total += inverse_gamma_logpdf(params.b, hyper.alpha_b, hyper.beta_b)
    return total


def log_posterior(
    data: NetworkData,
    params: ModelParams,
    hyper: Hyperparams,
    likelihood: bool = True,
    covariance: Optional[TreeCovariance] = None,
) -> float:
    """Unnormalized joint log posterior; ``likelihood=False`` drops the network term."""

    if params.tree.label_set != frozenset(data.labels):
        raise LeafSetMismatchError("tree leaves differ from the network labels")
    cov = covariance if covariance is not None else TreeCovariance.from_tree(params.tree, data.labels)
    total = bbm_log_prior(params.features, params.sigma2, cov) + log_priors(params, hyper)
    if likelihood:
        total += loglik_networks(data, params.a, params.features)
    return total


def pairwise_scaled_distances(Z: np.ndarray, sigma2: float, sigma: np.ndarray) -> np.ndarray:
    """``d_vu^2 / (2 sigma2 (1 - Sigma_vu))`` for ``v < u``; chi-square(K) under the prior."""

    D = distance_matrix(Z)
    iu = np.triu_indices(D.shape[0], 1)
    return D[iu] ** 2 / (2.0 * sigma2 * (1.0 - sigma[iu]))
