"""Domain entities used throughout the application."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from phylnet.domain.moves import DEFAULT_AGE_WINDOW, MoveKind
from phylnet.domain.treecore import PhyloTree

SAMPLER_BLOCKS: tuple[str, ...] = ("a", "z", "sigma2", "mu", "rescale", "tree", "b")


@dataclass(frozen=True, slots=True)
class Hyperparams:
    """Hiperparâmetros das distribuições a priori e do alvo de aceitação."""

    K: int = 3
    alpha_sigma: float = 1.0
    beta_sigma: float = 1.0
    alpha_b: float = 1.0
    beta_b: float = 1.0
    sigma_a2: float = 100.0
    sigma_mu2: float = 1000.0
    sigma_h2: float = 0.01
    target_accept: float = 0.23

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be a positive integer")
        for name in ("alpha_sigma", "beta_sigma", "alpha_b", "beta_b", "sigma_a2", "sigma_mu2", "sigma_h2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


def _default_tree_moves() -> dict[MoveKind, int]:
    return {kind: 5 for kind in MoveKind}


@dataclass(frozen=True, slots=True)
class SamplerConfig:
    """Parâmetros de execução do Metropolis-within-Gibbs."""

    n_iter: int = 20_000
    burn_in: int = 15_000
    thin: int = 10
    tree_moves_per_sweep: dict[MoveKind, int] = field(default_factory=_default_tree_moves)
    age_window: float = DEFAULT_AGE_WINDOW
    seed: int = 0
    n_chains: int = 4
    adapt_exponent: float = 0.8
    store_z: bool = False
    likelihood: bool = True
    blocks: tuple[str, ...] = SAMPLER_BLOCKS
    init_attempts: int = 100
    progress_every: int = 1000

    def __post_init__(self) -> None:
        if self.n_iter < 1 or self.thin < 1 or self.n_chains < 1:
            raise ValueError("n_iter, thin and n_chains must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
        if not self.age_window > 0:
            raise ValueError("age_window must be positive")
        moves = {MoveKind(kind): int(count) for kind, count in self.tree_moves_per_sweep.items()}
        if any(count < 0 for count in moves.values()):
            raise ValueError("tree_moves_per_sweep must be non-negative")
        object.__setattr__(self, "tree_moves_per_sweep", {kind: moves.get(kind, 0) for kind in MoveKind})
        unknown = set(self.blocks) - set(SAMPLER_BLOCKS)
        if unknown:
            raise ValueError(f"unknown sampler blocks: {sorted(unknown)}")


@dataclass(frozen=True, slots=True)
class PosteriorSample:
    """Uma amostra retida (pós burn-in e thinning)."""

    chain: int
    iteration: int
    a: float
    sigma2: float
    b: float
    newick: str
    z: Optional[np.ndarray] = None


@dataclass(frozen=True, slots=True)
class GenerativeScenario:
    """Cenário gerado pelo próprio modelo (árvore -> atributos -> redes)."""

    V: int
    K: int
    M: int
    b0: float = 0.6
    sigma2_0: float = 0.6
    a0: float = 2.6
    mu0: float | np.ndarray = 0.0
    tree: Optional[PhyloTree] = None
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.V < 2 or self.K < 1 or self.M < 1:
            raise ValueError("V >= 2, K >= 1 and M >= 1 are required")
        if not self.sigma2_0 > 0 or not self.b0 > 0:
            raise ValueError("sigma2_0 and b0 must be positive")
        mu = np.broadcast_to(np.asarray(self.mu0, dtype=float), (self.M, self.K))
        if not np.isfinite(mu).all():
            raise ValueError("mu0 must be finite")
        if self.tree is not None and self.tree.n_leaves != self.V:
            raise ValueError("fixed tree must have V leaves")

    def node_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return tuple(self.labels)
        if self.tree is not None:
            return tuple(sorted(self.tree.leaf_labels, key=natural_key))
        return default_labels(self.V)


@dataclass(frozen=True, slots=True)
class ProbabilityScenario:
    """Cenário com matriz de probabilidades de aresta fixa."""

    M: int
    P: np.ndarray
    labels: Optional[tuple[str, ...]] = None

    @property
    def V(self) -> int:
        return int(np.asarray(self.P).shape[0])

    def node_labels(self) -> tuple[str, ...]:
        return tuple(self.labels) if self.labels is not None else default_labels(self.V)


ScenarioSpec = GenerativeScenario | ProbabilityScenario


@dataclass(frozen=True, slots=True)
class SummaryConfig:
    """Parâmetros dos resumos a posteriori."""

    threshold: float = 0.8
    level: float = 0.9
    interval_levels: tuple[float, ...] = (0.5, 0.9, 0.95)
    metric: str = "rf"


def default_labels(n: int) -> tuple[str, ...]:
    return tuple(f"v{i + 1}" for i in range(n))


def natural_key(label: str) -> tuple:
    digits = "".join(ch for ch in label if ch.isdigit())
    return (label.rstrip("0123456789"), int(digits) if digits else -1, label)
