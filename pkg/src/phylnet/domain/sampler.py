"""Metropolis-within-Gibbs sampler for the phylogenetic latent space network model.

Each sweep visits the seven blocks (a, Z, sigma2, mu, joint rescale, tree, b)
in a freshly shuffled order. Random-walk blocks adapt their step size with
``log eta <- log eta + s^-0.8 (alpha - target)`` using the realized
acceptance probability ``alpha``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import stats

from phylnet.domain.entities import Hyperparams, PosteriorSample, SamplerConfig
from phylnet.domain.model import (
    LatentFeatures,
    ModelParams,
    NetworkData,
    TreeCovariance,
    bbm_log_prior,
    bernoulli_loglik,
    inverse_gamma_logpdf,
    log_posterior,
    loglik_from_distances,
    network_distances,
)
from phylnet.domain.moves import MoveKind, propose
from phylnet.domain.simulate import sample_features
from phylnet.domain.treecore import sample_yule_tree, to_newick, yule_log_density
from phylnet.infrastructure.logging_setup import run_event

LOGGER = logging.getLogger(__name__)

INITIAL_STEP_A = 0.1
INITIAL_STEP_Z = 0.5
INITIAL_STEP_B = 0.5

SampleSink = Callable[[PosteriorSample], None]


class SamplerInitializationError(RuntimeError):
    """No prior draw gave a finite log posterior."""


@dataclass(frozen=True, slots=True)
class AdaptiveScale:
    """Passo adaptativo (log eta) de uma proposta gaussiana."""

    log_eta: float
    s: int = 1
    target: float = 0.23
    exponent: float = 0.8

    @property
    def eta(self) -> float:
        return math.exp(self.log_eta)


def adapt(scale: AdaptiveScale, accept_prob: float) -> AdaptiveScale:
    """One Robbins-Monro step towards the target acceptance rate."""

    gain = scale.s ** (-scale.exponent)
    return replace(scale, log_eta=scale.log_eta + gain * (accept_prob - scale.target), s=scale.s + 1)


@dataclass(slots=True)
class BlockStats:
    attempts: int = 0
    accepted: int = 0
    prob_sum: float = 0.0

    def record(self, accepted: int, prob: float, attempts: int = 1) -> None:
        self.attempts += attempts
        self.accepted += accepted
        self.prob_sum += prob

    @property
    def mean_prob(self) -> float:
        return self.prob_sum / self.attempts if self.attempts else float("nan")

    @property
    def accepted_fraction(self) -> float:
        return self.accepted / self.attempts if self.attempts else float("nan")


@dataclass(slots=True)
class ChainState:
    """Estado mutável de uma cadeia (parâmetros, caches e passos adaptativos)."""

    params: ModelParams
    covariance: TreeCovariance
    distances: np.ndarray
    scale_a: AdaptiveScale
    scale_z: list[AdaptiveScale]
    scale_rescale: AdaptiveScale
    scale_b: AdaptiveScale
    rng: np.random.Generator
    likelihood: bool = True
    stats: dict[str, BlockStats] = field(default_factory=dict)
    infeasible: dict[str, int] = field(default_factory=dict)

    def block(self, name: str) -> BlockStats:
        return self.stats.setdefault(name, BlockStats())


@dataclass(slots=True)
class ChainResult:
    """Amostras retidas e diagnósticos de uma cadeia."""

    chain: int
    samples: list[PosteriorSample]
    acceptance: dict[str, float]
    accepted_fraction: dict[str, float]
    infeasible: dict[str, int]
    step_sizes: dict[str, float]

    def trace(self, name: str) -> np.ndarray:
        return np.array([getattr(sample, name) for sample in self.samples], dtype=float)


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Independent stream for chain ``chain``: ``SeedSequence(seed, spawn_key=(chain,))``."""

    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))


def _metropolis(log_ratio: float, rng: np.random.Generator) -> tuple[bool, float]:
    prob = math.exp(min(0.0, log_ratio)) if not math.isnan(log_ratio) else 0.0
    return bool(rng.random() < prob), prob


def _loglik(state: ChainState, data: NetworkData, a: Optional[float] = None, distances: Optional[np.ndarray] = None) -> float:
    if not state.likelihood:
        return 0.0
    return loglik_from_distances(
        data.adjacency,
        state.params.a if a is None else a,
        state.distances if distances is None else distances,
    )


# ---------------------------------------------------------------------------
# Blocks


def update_a(state: ChainState, data: NetworkData, hyper: Hyperparams, rng: np.random.Generator) -> ChainState:
    """Random-walk Metropolis step on the intercept."""

    params = state.params
    proposal = params.a + state.scale_a.eta * rng.standard_normal()
    log_ratio = (params.a**2 - proposal**2) / (2.0 * hyper.sigma_a2)
    if state.likelihood:
        log_ratio += _loglik(state, data, a=proposal) - _loglik(state, data)
    accepted, prob = _metropolis(log_ratio, rng)
    if accepted:
        params.a = proposal
    state.scale_a = adapt(state.scale_a, prob)
    state.block("a").record(int(accepted), prob)
    return state


def update_Z(state: ChainState, data: NetworkData, hyper: Hyperparams, rng: np.random.Generator) -> ChainState:
    """Node-by-node Gaussian random walk on every feature vector, vectorized across networks."""

    features = state.params.features
    Z, mu = features.Z, features.mu
    M, K, V = Z.shape
    if M == 0:
        return state
    precision = state.covariance.precision
    precision_ones = state.covariance.precision_ones
    sigma2 = state.params.sigma2
    a = state.params.a
    eta = np.array([scale.eta for scale in state.scale_z])
    prob_sum = np.zeros(M)
    accepted_total = 0
    for v in rng.permutation(V):
        step = rng.standard_normal((M, K)) * eta[:, None]
        # (Sigma^-1 (z_k - mu_k 1))_v for every (m, k)
        solved_v = Z @ precision[v] - mu * precision_ones[v]
        log_ratio = -(2.0 * step * solved_v + step**2 * precision[v, v]).sum(axis=1) / (2.0 * sigma2)
        proposal = Z[:, :, v] + step
        new_dist = np.sqrt(((proposal[:, :, None] - Z) ** 2).sum(axis=1))
        new_dist[:, v] = 0.0
        if state.likelihood:
            y = data.adjacency[:, v, :]
            old_dist = state.distances[:, v, :]
            log_ratio += (bernoulli_loglik(y, a - new_dist) - bernoulli_loglik(y, a - old_dist)).sum(axis=1)
        probs = np.exp(np.minimum(0.0, np.nan_to_num(log_ratio, nan=-np.inf)))
        accepted = rng.random(M) < probs
        prob_sum += probs
        if accepted.any():
            idx = np.flatnonzero(accepted)
            Z[idx, :, v] = proposal[idx]
            state.distances[idx, v, :] = new_dist[idx]
            state.distances[idx, :, v] = new_dist[idx]
            accepted_total += idx.size
    state.scale_z = [adapt(scale, float(p) / V) for scale, p in zip(state.scale_z, prob_sum)]
    state.block("z").record(accepted_total, float(prob_sum.sum()), attempts=M * V)
    return state


def gibbs_sigma2(state: ChainState, hyper: Hyperparams, rng: np.random.Generator) -> ChainState:
    """Exact draw from the inverse-gamma full conditional of sigma2."""

    features = state.params.features
    M, K, V = features.Z.shape
    quad = float(state.covariance.quadratic_forms(features.centered()).sum()) if M else 0.0
    shape = hyper.alpha_sigma + V * K * M / 2.0
    scale = hyper.beta_sigma + quad / 2.0
    state.params.sigma2 = float(stats.invgamma.rvs(shape, scale=scale, random_state=rng))
    state.block("sigma2").record(1, 1.0)
    return state


def gibbs_mu(state: ChainState, hyper: Hyperparams, rng: np.random.Generator) -> ChainState:
    """Exact Gaussian draws of every centering value mu_k^(m)."""

    features = state.params.features
    sigma2 = state.params.sigma2
    cov = state.covariance
    precision = 1.0 / hyper.sigma_mu2 + cov.ones_precision_ones / sigma2
    mean = (features.Z @ cov.precision_ones) / sigma2 / precision
    features.mu = mean + rng.standard_normal(mean.shape) / math.sqrt(precision)
    state.block("mu").record(1, 1.0)
    return state


def _rescalable_log_density(
    state: ChainState, data: NetworkData, hyper: Hyperparams, features: LatentFeatures, sigma2: float, distances: np.ndarray
) -> float:
    total = bbm_log_prior(features, sigma2, state.covariance)
    total += inverse_gamma_logpdf(sigma2, hyper.alpha_sigma, hyper.beta_sigma)
    total += float(stats.norm.logpdf(features.mu, 0.0, math.sqrt(hyper.sigma_mu2)).sum())
    total += _loglik(state, data, distances=distances)
    return total


def rescale_move(state: ChainState, data: NetworkData, hyper: Hyperparams, rng: np.random.Generator) -> ChainState:
    """Joint proposal (hZ, h mu, h^2 sigma2) with log h Gaussian."""

    params = state.params
    features = params.features
    M, K, V = features.Z.shape
    log_h = state.scale_rescale.eta * rng.standard_normal()
    h = math.exp(log_h)
    proposed = LatentFeatures(Z=features.Z * h, mu=features.mu * h)
    proposed_sigma2 = params.sigma2 * h * h
    proposed_distances = state.distances * h
    log_ratio = _rescalable_log_density(state, data, hyper, proposed, proposed_sigma2, proposed_distances)
    log_ratio -= _rescalable_log_density(state, data, hyper, features, params.sigma2, state.distances)
    log_ratio += (M * K * V + M * K + 2) * log_h
    accepted, prob = _metropolis(log_ratio, rng)
    if accepted and proposed_sigma2 > 0:
        params.features = proposed
        params.sigma2 = proposed_sigma2
        state.distances = proposed_distances
    state.scale_rescale = adapt(state.scale_rescale, prob)
    state.block("rescale").record(int(accepted), prob)
    return state


def update_tree(
    state: ChainState,
    data: NetworkData,
    hyper: Hyperparams,
    rng: np.random.Generator,
    config: SamplerConfig,
) -> ChainState:
    """Metropolis updates of the tree with each symmetric move kind."""

    params = state.params
    current = bbm_log_prior(params.features, params.sigma2, state.covariance) + yule_log_density(params.tree, params.b)
    for kind in MoveKind:
        stats_ = state.block(f"tree.{kind.value}")
        for _ in range(config.tree_moves_per_sweep.get(kind, 0)):
            outcome = propose(params.tree, kind, rng, config.age_window)
            if not outcome.feasible:
                state.infeasible[kind.value] = state.infeasible.get(kind.value, 0) + 1
                stats_.record(0, 0.0)
                continue
            cov = TreeCovariance.from_tree(outcome.proposed, data.labels)
            candidate = bbm_log_prior(params.features, params.sigma2, cov) + yule_log_density(outcome.proposed, params.b)
            accepted, prob = _metropolis(candidate - current, rng)
            if accepted:
                params.tree = outcome.proposed
                state.covariance = cov
                current = candidate
            stats_.record(int(accepted), prob)
    return state


def update_b(state: ChainState, hyper: Hyperparams, rng: np.random.Generator) -> ChainState:
    """Random walk on log b against the inverse-gamma prior and the Yule density."""

    params = state.params
    log_b = math.log(params.b)
    proposal = math.exp(log_b + state.scale_b.eta * rng.standard_normal())
    log_ratio = (
        yule_log_density(params.tree, proposal)
        - yule_log_density(params.tree, params.b)
        + inverse_gamma_logpdf(proposal, hyper.alpha_b, hyper.beta_b)
        - inverse_gamma_logpdf(params.b, hyper.alpha_b, hyper.beta_b)
        + math.log(proposal)
        - log_b
    )
    accepted, prob = _metropolis(log_ratio, rng)
    if accepted:
        params.b = proposal
    state.scale_b = adapt(state.scale_b, prob)
    state.block("b").record(int(accepted), prob)
    return state


def sweep(state: ChainState, data: NetworkData, hyper: Hyperparams, config: SamplerConfig) -> list[str]:
    """Run every configured block once in random order; returns the order used."""

    rng = state.rng
    blocks = list(config.blocks)
    order = [blocks[i] for i in rng.permutation(len(blocks))]
    for block in order:
        if block == "a":
            update_a(state, data, hyper, rng)
        elif block == "z":
            update_Z(state, data, hyper, rng)
        elif block == "sigma2":
            gibbs_sigma2(state, hyper, rng)
        elif block == "mu":
            gibbs_mu(state, hyper, rng)
        elif block == "rescale":
            rescale_move(state, data, hyper, rng)
        elif block == "tree":
            update_tree(state, data, hyper, rng, config)
        elif block == "b":
            update_b(state, hyper, rng)
    return order


# ---------------------------------------------------------------------------
# Initialization and chains


def initial_intercept(data: NetworkData, features: LatentFeatures) -> float:
    """``logit(pooled density) + mean pairwise distance`` of the initial features."""

    V = data.V
    n_pairs = data.M * V * (V - 1) // 2
    if n_pairs == 0:
        return 0.0
    density = min(max(data.density(), 0.5 / n_pairs), 1.0 - 0.5 / n_pairs)
    iu = np.triu_indices(V, 1)
    mean_distance = float(network_distances(features)[:, iu[0], iu[1]].mean())
    return math.log(density / (1.0 - density)) + mean_distance


def initialize_state(
    data: NetworkData,
    hyper: Hyperparams,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> ChainState:
    """Draw (tree, b, sigma2, mu, Z) from the prior; a from the density rule."""

    if data.V <= 2 * hyper.K + 1:
        LOGGER.warning("V=%d <= 2K+1=%d: latent distances are weakly identified", data.V, 2 * hyper.K + 1)
    for attempt in range(1, config.init_attempts + 1):
        b = float(stats.invgamma.rvs(hyper.alpha_b, scale=hyper.beta_b, random_state=rng))
        tree = sample_yule_tree(data.V, b, rng, data.labels)
        sigma2 = float(stats.invgamma.rvs(hyper.alpha_sigma, scale=hyper.beta_sigma, random_state=rng))
        mu = rng.normal(0.0, math.sqrt(hyper.sigma_mu2), size=(data.M, hyper.K))
        cov = TreeCovariance.from_tree(tree, data.labels)
        features = sample_features(cov, data.labels, sigma2, mu, rng)
        params = ModelParams(a=initial_intercept(data, features), sigma2=sigma2, b=b, tree=tree, features=features)
        value = log_posterior(data, params, hyper, likelihood=config.likelihood, covariance=cov)
        if math.isfinite(value):
            return ChainState(
                params=params,
                covariance=cov,
                distances=network_distances(features),
                scale_a=AdaptiveScale(math.log(INITIAL_STEP_A), target=hyper.target_accept, exponent=config.adapt_exponent),
                scale_z=[
                    AdaptiveScale(math.log(INITIAL_STEP_Z), target=hyper.target_accept, exponent=config.adapt_exponent)
                    for _ in range(data.M)
                ],
                scale_rescale=AdaptiveScale(
                    0.5 * math.log(hyper.sigma_h2), target=hyper.target_accept, exponent=config.adapt_exponent
                ),
                scale_b=AdaptiveScale(math.log(INITIAL_STEP_B), target=hyper.target_accept, exponent=config.adapt_exponent),
                rng=rng,
                likelihood=config.likelihood,
            )
        LOGGER.warning("Initial draw %d has non-finite log posterior; drawing again", attempt)
    raise SamplerInitializationError(f"no finite initial state after {config.init_attempts} prior draws")


def _snapshot(state: ChainState, chain: int, iteration: int, store_z: bool) -> PosteriorSample:
    params = state.params
    return PosteriorSample(
        chain=chain,
        iteration=iteration,
        a=float(params.a),
        sigma2=float(params.sigma2),
        b=float(params.b),
        newick=to_newick(params.tree),
        z=params.features.Z.copy() if store_z else None,
    )


def _result(state: ChainState, chain: int, samples: list[PosteriorSample]) -> ChainResult:
    return ChainResult(
        chain=chain,
        samples=samples,
        acceptance={name: s.mean_prob for name, s in sorted(state.stats.items()) if s.attempts},
        accepted_fraction={name: s.accepted_fraction for name, s in sorted(state.stats.items()) if s.attempts},
        infeasible=dict(sorted(state.infeasible.items())),
        step_sizes={
            "a": state.scale_a.eta,
            "rescale": state.scale_rescale.eta,
            "b": state.scale_b.eta,
            **{f"z.{m + 1}": scale.eta for m, scale in enumerate(state.scale_z)},
        },
    )


def run_chain(
    data: NetworkData,
    hyper: Hyperparams,
    config: SamplerConfig,
    chain: int = 0,
    sink: Optional[SampleSink] = None,
) -> ChainResult:
    """Run one chain; deterministic given ``config.seed`` and ``chain``."""

    if data.V < 2:
        raise ValueError("at least two nodes are required")
    rng = chain_rng(config.seed, chain)
    state = initialize_state(data, hyper, config, rng)
    run_event(LOGGER, "CHAIN_START", chain=chain, n_iter=config.n_iter, V=data.V, M=data.M, K=hyper.K)
    samples: list[PosteriorSample] = []
    for iteration in range(1, config.n_iter + 1):
        sweep(state, data, hyper, config)
        if iteration > config.burn_in and (iteration - config.burn_in) % config.thin == 0:
            sample = _snapshot(state, chain, iteration, config.store_z)
            samples.append(sample)
            if sink is not None:
                sink(sample)
        if config.progress_every and iteration % config.progress_every == 0:
            LOGGER.info(
                "Cadeia %d: iteração %d/%d (a=%.3f, sigma2=%.3f, b=%.3f)",
                chain,
                iteration,
                config.n_iter,
                state.params.a,
                state.params.sigma2,
                state.params.b,
            )
    result = _result(state, chain, samples)
    run_event(LOGGER, "CHAIN_END", chain=chain, samples=len(samples), acceptance=result.acceptance)
    return result


def _run_chain_job(job: tuple[NetworkData, Hyperparams, SamplerConfig, int, Optional[Callable[[int], SampleSink]]]) -> ChainResult:
    data, hyper, config, chain, sink_factory = job
    sink = sink_factory(chain) if sink_factory is not None else None
    return run_chain(data, hyper, config, chain, sink)


def run_chains(
    data: NetworkData,
    hyper: Hyperparams,
    config: SamplerConfig,
    jobs: int = 1,
    sink_factory: Optional[Callable[[int], SampleSink]] = None,
) -> list[ChainResult]:
    """Run ``config.n_chains`` independent chains, up to ``jobs`` at a time."""

    work = [(data, hyper, config, chain, sink_factory) for chain in range(config.n_chains)]
    if jobs <= 1 or config.n_chains == 1:
        return [_run_chain_job(job) for job in work]
    with ProcessPoolExecutor(max_workers=min(jobs, config.n_chains)) as executor:
        return list(executor.map(_run_chain_job, work))
