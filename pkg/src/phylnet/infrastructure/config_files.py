"""Key=value run configuration files and truth manifests.

Both use dotenv syntax (``KEY=value``, ``#`` comments) and are read with
``dotenv_values`` so they never touch ``os.environ``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional

from dotenv import dotenv_values, set_key

from phylnet.config import get_settings
from phylnet.domain.entities import GenerativeScenario, Hyperparams, SamplerConfig, ScenarioSpec, SummaryConfig
from phylnet.domain.moves import MoveKind
from phylnet.domain.simulate import scenario_one
from phylnet.domain.treecore import PhyloTree, format_float, from_newick
from phylnet.infrastructure.repositories import read_newick

LOGGER = logging.getLogger(__name__)

SCENARIOS = ("generative", "blocks")


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True, slots=True)
class ScenarioSettings:
    """Parâmetros do cenário de simulação lidos do arquivo de configuração."""

    name: str = "generative"
    V: Optional[int] = None
    M: Optional[int] = None
    b0: float = 0.6
    sigma2_0: float = 0.6
    a0: float = 2.6
    mu0: float = 0.0
    tree_path: Optional[Path] = None
    communities: int = 5
    within: float = 0.6
    between: float = 0.1

    def build(self, K: int) -> ScenarioSpec:
        """Generative defaults give V=60, M=30; block defaults give V=80, M=10."""

        if self.name == "blocks":
            return scenario_one(
                V=self.V or 80, M=self.M or 10, blocks=self.communities, within=self.within, between=self.between
            )
        tree = None
        if self.tree_path is not None:
            tree = read_truth_tree(Path(self.tree_path))
        V = self.V or (tree.n_leaves if tree is not None else 60)
        return GenerativeScenario(
            V=V,
            K=K,
            M=self.M or 30,
            b0=self.b0,
            sigma2_0=self.sigma2_0,
            a0=self.a0,
            mu0=self.mu0,
            tree=tree,
        )


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Configuração completa de uma execução (priors, amostrador, cenário e resumos)."""

    hyper: Hyperparams = field(default_factory=Hyperparams)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    summary: SummaryConfig = field(default_factory=SummaryConfig)
    jobs: int = 1


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in {"1", "true", "yes", "on", "sim"}:
        return True
    if value in {"0", "false", "no", "off", "nao", "não"}:
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(item) for item in raw.split(",") if item.strip())


def _parse_words(raw: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def _parse_scenario(raw: str) -> str:
    value = raw.strip().lower()
    if value not in SCENARIOS:
        raise ValueError(f"expected one of {SCENARIOS}")
    return value


# KEY -> (group, attribute, parser)
_FIELDS: dict[str, tuple[str, str, Callable[[str], Any]]] = {
    "K": ("hyper", "K", int),
    "ALPHA_SIGMA": ("hyper", "alpha_sigma", float),
    "BETA_SIGMA": ("hyper", "beta_sigma", float),
    "ALPHA_B": ("hyper", "alpha_b", float),
    "BETA_B": ("hyper", "beta_b", float),
    "SIGMA_A2": ("hyper", "sigma_a2", float),
    "SIGMA_MU2": ("hyper", "sigma_mu2", float),
    "SIGMA_H2": ("hyper", "sigma_h2", float),
    "TARGET_ACCEPT": ("hyper", "target_accept", float),
    "N_ITER": ("sampler", "n_iter", int),
    "BURN_IN": ("sampler", "burn_in", int),
    "THIN": ("sampler", "thin", int),
    "AGE_WINDOW": ("sampler", "age_window", float),
    "SEED": ("sampler", "seed", int),
    "N_CHAINS": ("sampler", "n_chains", int),
    "ADAPT_EXPONENT": ("sampler", "adapt_exponent", float),
    "STORE_Z": ("sampler", "store_z", _parse_bool),
    "LIKELIHOOD": ("sampler", "likelihood", _parse_bool),
    "BLOCKS": ("sampler", "blocks", _parse_words),
    "INIT_ATTEMPTS": ("sampler", "init_attempts", int),
    "PROGRESS_EVERY": ("sampler", "progress_every", int),
    "SCENARIO": ("scenario", "name", _parse_scenario),
    "V": ("scenario", "V", int),
    "M": ("scenario", "M", int),
    "B0": ("scenario", "b0", float),
    "SIGMA2_0": ("scenario", "sigma2_0", float),
    "A0": ("scenario", "a0", float),
    "MU0": ("scenario", "mu0", float),
    "TREE": ("scenario", "tree_path", Path),
    "COMMUNITIES": ("scenario", "communities", int),
    "P_WITHIN": ("scenario", "within", float),
    "P_BETWEEN": ("scenario", "between", float),
    "THRESHOLD": ("summary", "threshold", float),
    "LEVEL": ("summary", "level", float),
    "INTERVAL_LEVELS": ("summary", "interval_levels", _parse_floats),
    "METRIC": ("summary", "metric", str),
    "JOBS": ("run", "jobs", int),
}
_MOVE_KEYS = {f"MOVES_{kind.value.upper()}": kind for kind in MoveKind}

CONFIG_KEYS: tuple[str, ...] = tuple(_FIELDS) + tuple(_MOVE_KEYS)


def parse_run_values(values: Mapping[str, Optional[str]]) -> RunConfig:
    """Build a :class:`RunConfig` from raw ``KEY -> text`` pairs."""

    groups: dict[str, dict[str, Any]] = {"hyper": {}, "sampler": {}, "scenario": {}, "summary": {}, "run": {}}
    moves: dict[MoveKind, int] = {}
    for raw_key, raw_value in values.items():
        key = raw_key.strip().upper()
        if raw_value is None:
            raise ConfigError("missing value", key)
        try:
            if key in _MOVE_KEYS:
                moves[_MOVE_KEYS[key]] = int(raw_value)
                continue
            if key not in _FIELDS:
                raise ConfigError("unknown configuration key", key)
            group, attribute, parser = _FIELDS[key]
            groups[group][attribute] = parser(raw_value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"invalid value {raw_value!r} ({exc})", key) from exc
    if moves:
        defaults = SamplerConfig().tree_moves_per_sweep
        groups["sampler"]["tree_moves_per_sweep"] = {**defaults, **moves}

    def build(group: str, factory: Callable[..., Any]) -> Any:
        try:
            return factory(**groups[group])
        except ValueError as exc:
            raise ConfigError(str(exc), group.upper()) from exc

    summary = build("summary", SummaryConfig)
    if not 0.5 <= summary.threshold < 1.0:
        raise ConfigError("threshold must lie in [0.5, 1)", "THRESHOLD")
    if not 0.0 < summary.level <= 1.0:
        raise ConfigError("level must lie in (0, 1]", "LEVEL")
    jobs = groups["run"].get("jobs", 1)
    if jobs < 1:
        raise ConfigError("jobs must be positive", "JOBS")
    return RunConfig(
        hyper=build("hyper", Hyperparams),
        sampler=build("sampler", SamplerConfig),
        scenario=build("scenario", ScenarioSettings),
        summary=summary,
        jobs=jobs,
    )


def load_run_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Read ``path`` and apply overrides: CLI flag > environment > file > default."""

    values: dict[str, Optional[str]] = {}
    if path is not None:
        if not path.exists():
            raise FileNotFoundError(path)
        values.update(dotenv_values(path))
    settings = get_settings()
    if settings.seed is not None:
        values["SEED"] = str(settings.seed)
    if settings.jobs is not None:
        values["JOBS"] = str(settings.jobs)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key.upper()] = str(value)
    config = parse_run_values(values)
    LOGGER.debug("Run configuration loaded from %s with %d keys", path, len(values))
    return config


def run_config_values(config: RunConfig) -> dict[str, str]:
    """Effective configuration as ``KEY -> text`` (inverse of :func:`parse_run_values`)."""

    sources = {
        "hyper": config.hyper,
        "sampler": config.sampler,
        "scenario": config.scenario,
        "summary": config.summary,
        "run": config,
    }
    out: dict[str, str] = {}
    for key, (group, attribute, _parser) in _FIELDS.items():
        value = getattr(sources[group], attribute)
        if value is None:
            continue
        out[key] = format_value(value)
    for key, kind in _MOVE_KEYS.items():
        out[key] = str(config.sampler.tree_moves_per_sweep[kind])
    return out


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(item) for item in value)
    return str(value)


def write_key_values(values: Mapping[str, Any], path: Path) -> Path:
    """Write a fresh key=value file; values are single-quoted so Newick text survives."""

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("", encoding="utf-8")
    for key, value in values.items():
        set_key(str(path), key, format_value(value), quote_mode="always")
    return path


def read_key_values(path: Path) -> dict[str, str]:
    if not path.exists():
        raise FileNotFoundError(path)
    return {key: value or "" for key, value in dotenv_values(path).items()}


def read_truth_tree(path: Path, expected_leaves: Optional[Iterable[str]] = None) -> PhyloTree:
    """Reference tree from a Newick file or from the TRUTH_NEWICK entry of a truth manifest."""

    if path.suffix != ".env":
        return read_newick(path, expected_leaves)
    text = read_key_values(path).get("TRUTH_NEWICK")
    if not text:
        raise ConfigError("manifest has no tree", "TRUTH_NEWICK")
    return from_newick(text, expected_leaves)
