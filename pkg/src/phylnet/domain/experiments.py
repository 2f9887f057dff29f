"""Scaled validation studies: tree recovery and posterior concentration as M grows."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from phylnet.domain.baseline import linkage_tree
from phylnet.domain.entities import Hyperparams, SamplerConfig
from phylnet.domain.model import NetworkData
from phylnet.domain.sampler import ChainResult, run_chains
from phylnet.domain.simulate import scenario_two, simulate_generative
from phylnet.domain.summarize import (
    TreeSampleSet,
    consensus,
    credible_interval,
    credible_radius,
    distance_summary,
)
from phylnet.domain.treecore import rf_distance, split_distance, splits
from phylnet.infrastructure.logging_setup import run_event

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class RecoveryResult:
    """Distâncias à árvore verdadeira e cobertura dos intervalos de a, sigma2 e b."""

    seed: int
    V: int
    M: int
    K: int
    mean_rf: float
    q05_rf: float
    q95_rf: float
    consensus_rf: float
    baseline_rf: float
    covers_a: bool
    covers_sigma2: bool
    covers_b: bool
    n_samples: int

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def pooled_samples(results: Sequence[ChainResult]) -> TreeSampleSet:
    return TreeSampleSet.from_samples(sample for result in results for sample in result.samples)


def pooled_trace(results: Sequence[ChainResult], name: str) -> np.ndarray:
    return np.concatenate([result.trace(name) for result in results])


def _contains(bounds: tuple[float, float], value: float) -> bool:
    return bounds[0] <= value <= bounds[1]


def tree_recovery(
    V: int = 20,
    M: int = 20,
    K: int = 3,
    config: Optional[SamplerConfig] = None,
    seed: int = 0,
    hyper: Optional[Hyperparams] = None,
    threshold: float = 0.8,
    level: float = 0.9,
    jobs: int = 1,
) -> RecoveryResult:
    """Simulate tree-structured data, fit it and compare the posterior with the truth."""

    scenario = scenario_two(V=V, M=M, K=K)
    hyper = hyper or Hyperparams(K=K)
    config = replace(config or SamplerConfig(), seed=seed)
    simulated = simulate_generative(scenario, np.random.default_rng(np.random.SeedSequence(seed)))
    truth = simulated.tree
    run_event(LOGGER, "RECOVERY_START", seed=seed, V=V, M=M, K=K)
    results = run_chains(simulated.data, hyper, config, jobs=jobs)
    samples = pooled_samples(results)
    summary = distance_summary(samples, truth)
    consensus_tree = consensus(samples, threshold)
    outcome = RecoveryResult(
        seed=seed,
        V=V,
        M=M,
        K=K,
        mean_rf=summary["mean"],
        q05_rf=summary["q05"],
        q95_rf=summary["q95"],
        consensus_rf=split_distance(consensus_tree.splits, splits(truth), V, normalized=True),
        baseline_rf=rf_distance(linkage_tree(simulated.data), truth, normalized=True),
        covers_a=_contains(credible_interval(pooled_trace(results, "a"), level), scenario.a0),
        covers_sigma2=_contains(credible_interval(pooled_trace(results, "sigma2"), level), scenario.sigma2_0),
        covers_b=_contains(credible_interval(pooled_trace(results, "b"), level), scenario.b0),
        n_samples=len(samples),
    )
    run_event(LOGGER, "RECOVERY_END", **outcome.to_dict())
    return outcome


def concentration_curve(
    V: int = 20,
    K: int = 3,
    Ms: Sequence[int] = (1, 10, 20),
    replicates: int = 1,
    config: Optional[SamplerConfig] = None,
    seed: int = 0,
    level: float = 0.9,
    hyper: Optional[Hyperparams] = None,
    jobs: int = 1,
) -> pd.DataFrame:
    """Credible radius around the true tree for growing numbers of networks.

    Each replicate draws one tree and ``max(Ms)`` networks; the fit for ``M``
    uses the first ``M`` of them.
    """

    if not Ms or min(Ms) < 1:
        raise ValueError("Ms must hold positive network counts")
    hyper = hyper or Hyperparams(K=K)
    config = config or SamplerConfig()
    rows = []
    for replicate in range(replicates):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate,)))
        simulated = simulate_generative(scenario_two(V=V, M=max(Ms), K=K), rng)
        for M in sorted(Ms):
            subset = NetworkData(labels=simulated.data.labels, adjacency=simulated.data.adjacency[:M])
            results = run_chains(subset, hyper, replace(config, seed=seed + replicate), jobs=jobs)
            samples = pooled_samples(results)
            radius = credible_radius(samples, simulated.tree, level)
            rows.append(
                {
                    "replicate": replicate,
                    "M": M,
                    "radius": radius,
                    "mean_rf": distance_summary(samples, simulated.tree)["mean"],
                }
            )
            LOGGER.info("Réplica %d, M=%d: raio %.4f", replicate, M, radius)
    return pd.DataFrame(rows, columns=["replicate", "M", "radius", "mean_rf"])
