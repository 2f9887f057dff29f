"""Typer CLI for PHYLNET."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np
import typer

from phylnet.config import get_settings
from phylnet.domain.baseline import linkage_tree
from phylnet.domain.entities import GenerativeScenario
from phylnet.domain.experiments import concentration_curve, tree_recovery
from phylnet.domain.sampler import SamplerInitializationError, run_chains
from phylnet.domain.simulate import expected_density, simulate_from_probability_matrix, simulate_generative
from phylnet.domain.summarize import (
    TreeSampleSet,
    consensus,
    credible_radius,
    densitree_export,
    diagnostics,
    distance_summary,
)
from phylnet.domain.treecore import format_float, rf_distance, to_newick
from phylnet.infrastructure.config_files import (
    RunConfig,
    load_run_config,
    read_truth_tree,
    run_config_values,
    write_key_values,
)
from phylnet.infrastructure.logging_setup import get_log_file_path, run_event, setup_logging
from phylnet.infrastructure.repositories import (
    SampleLogFactory,
    load_networks,
    network_file_name,
    is_newick_file,
    read_newick,
    read_newick_file,
    read_sample_logs,
    samples_from_frame,
    write_json,
    write_networks,
    write_newick,
    write_table,
    write_text,
)

LOGGER = logging.getLogger(__name__)

app = typer.Typer(help="CLI principal do PHYLNET: redes com espaço latente filogenético")
experiment_app = typer.Typer(help="Estudos de validação em escala reduzida")
app.add_typer(experiment_app, name="experiment")

ConfigOption = typer.Option(None, "--config", help="Arquivo KEY=valor com a configuração da execução.")
SeedOption = typer.Option(None, "--seed", help="Semente (sobrepõe PHYLNET_SEED e o arquivo).")
JobsOption = typer.Option(None, "--jobs", help="Cadeias em paralelo (sobrepõe PHYLNET_JOBS).")
OutOption = typer.Option(None, "--out", help="Diretório de saída.")


@contextmanager
def _user_errors() -> Iterator[None]:
    """Turn input and configuration errors into a message plus exit code 1."""

    try:
        yield
    except FileNotFoundError as exc:
        typer.echo(f"Arquivo não encontrado: {exc.filename or exc}", err=True)
        raise typer.Exit(code=1) from exc
    except (ValueError, SamplerInitializationError) as exc:
        typer.echo(f"Erro: {exc}", err=True)
        raise typer.Exit(code=1) from exc


def _output_dir(out: Optional[Path]) -> Path:
    path = out or get_settings().out_dir
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(config: Optional[Path], **overrides: object) -> RunConfig:
    return load_run_config(config, {key.upper(): value for key, value in overrides.items()})


@app.callback()
def cli_callback() -> None:
    """Inicializa logging padrão para todos os comandos."""

    setup_logging(log_file=get_log_file_path("phylnet.log"))


@app.command("simulate")
def simulate(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
) -> None:
    """Simula redes (e a árvore verdadeira) a partir do cenário configurado."""

    with _user_errors():
        run_config = _load_config(config, seed=seed)
        out_dir = _output_dir(out)
        seed_value = run_config.sampler.seed
        spec = run_config.scenario.build(run_config.hyper.K)
        rng = np.random.default_rng(np.random.SeedSequence(seed_value))
        run_event(LOGGER, "SIMULATE_START", seed=seed_value, scenario=run_config.scenario.name)
        manifest: dict[str, object] = {"SCENARIO": run_config.scenario.name, "SEED": seed_value}
        if isinstance(spec, GenerativeScenario):
            result = simulate_generative(spec, rng)
            data = result.data
            write_newick(out_dir / "truth.nwk", result.tree)
            manifest.update(
                A0=spec.a0,
                SIGMA2_0=spec.sigma2_0,
                B0=spec.b0,
                V=spec.V,
                M=spec.M,
                K=spec.K,
                TRUTH_NEWICK=to_newick(result.tree),
                EXPECTED_DENSITY=expected_density(spec.a0, result.features),
            )
        else:
            data = simulate_from_probability_matrix(spec, rng)
            manifest.update(V=spec.V, M=spec.M)
        write_networks(out_dir, data)
        write_key_values(manifest, out_dir / "truth_manifest.env")
    for m in range(data.M):
        typer.echo(f"{network_file_name(m)}: V={data.V}, densidade={data.density(m):.4f}")
    typer.echo(f"Redes salvas em: {out_dir}")


@app.command("fit")
def fit(
    inputs: List[Path] = typer.Argument(..., help="Arquivos CSV de adjacência ou diretórios com *.csv."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    jobs: Optional[int] = JobsOption,
    out: Optional[Path] = OutOption,
    n_iter: Optional[int] = typer.Option(None, "--n-iter", help="Número de iterações por cadeia."),
    burn_in: Optional[int] = typer.Option(None, "--burn-in", help="Iterações descartadas."),
    thin: Optional[int] = typer.Option(None, "--thin", help="Intervalo de retenção das amostras."),
    chains: Optional[int] = typer.Option(None, "--chains", help="Número de cadeias."),
) -> None:
    """Ajusta o modelo por Metropolis-within-Gibbs e grava os logs de amostras."""

    with _user_errors():
        run_config = _load_config(
            config, seed=seed, jobs=jobs, n_iter=n_iter, burn_in=burn_in, thin=thin, n_chains=chains
        )
        data = load_networks(inputs)
        out_dir = _output_dir(out)
        sampler_config = run_config.sampler
        run_event(LOGGER, "FIT_START", V=data.V, M=data.M, chains=sampler_config.n_chains, jobs=run_config.jobs)
        results = run_chains(
            data,
            run_config.hyper,
            sampler_config,
            jobs=run_config.jobs,
            sink_factory=SampleLogFactory(out_dir, sampler_config.store_z),
        )
        report = diagnostics(
            {name: [result.trace(name) for result in results] for name in ("a", "sigma2", "b")},
            levels=run_config.summary.interval_levels,
        )
        payload = report.to_dict()
        payload["chains"] = [
            {
                "chain": result.chain,
                "samples": len(result.samples),
                "acceptance": result.acceptance,
                "accepted_fraction": result.accepted_fraction,
                "infeasible_tree_moves": result.infeasible,
                "step_sizes": result.step_sizes,
            }
            for result in results
        ]
        payload["config"] = run_config_values(run_config)
        payload["data"] = {"V": data.V, "M": data.M, "labels": list(data.labels)}
        write_json(out_dir / "diagnostics.json", payload)
        run_event(LOGGER, "FIT_END", chains=len(results))
    for name, diag in report.parameters.items():
        rhat = "n/a" if diag.rhat is None else f"{diag.rhat:.3f}"
        typer.echo(f"{name}: média={diag.pooled.mean:.4f}, ESS={diag.pooled.ess:.1f}, R-hat={rhat}")
    typer.echo(f"Logs e diagnósticos salvos em: {out_dir}")


@app.command("summarize")
def summarize(
    logs: List[Path] = typer.Argument(
        ..., help="Logs de amostras (chain_<c>.samples.tsv) e/ou arquivos Newick com uma árvore por linha."
    ),
    config: Optional[Path] = ConfigOption,
    threshold: Optional[float] = typer.Option(None, "--threshold", help="Proporção mínima p dos splits."),
    level: Optional[float] = typer.Option(None, "--level", help="Nível do conjunto de credibilidade."),
    truth: Optional[Path] = typer.Option(
        None, "--truth", help="Árvore de referência em Newick ou truth_manifest.env do simulate."
    ),
    out: Optional[Path] = OutOption,
) -> None:
    """Gera árvore de consenso, exportação DensiTree e relatório das amostras."""

    with _user_errors():
        run_config = _load_config(config, threshold=threshold, level=level)
        summary_config = run_config.summary
        tree_files = [path for path in logs if is_newick_file(path)]
        log_files = [path for path in logs if not is_newick_file(path)]
        frame = read_sample_logs(log_files) if log_files else None
        sampled = list(TreeSampleSet.from_samples(samples_from_frame(frame))) if frame is not None else []
        for path in tree_files:
            sampled.extend(read_newick_file(path))
        trees = TreeSampleSet(tuple(sampled))
        out_dir = _output_dir(out)
        tree = consensus(trees, summary_config.threshold)
        write_text(out_dir / "consensus.nwk", tree.to_newick() + "\n")
        export = densitree_export(trees)
        write_text(out_dir / "densitree.nwk", export.newick_text())
        write_table(out_dir / "densitree_coords.tsv", export.coordinates)
        traces: dict[str, list[np.ndarray]] = {}
        if frame is not None:
            traces = {
                name: [group[name].to_numpy(dtype=float) for _, group in frame.groupby("chain", sort=True)]
                for name in ("a", "sigma2", "b")
            }
        payload: dict[str, object] = {
            "n_samples": len(trees),
            "threshold": summary_config.threshold,
            "consensus": tree.to_newick(),
            "consensus_splits": len(tree.splits),
            "leaf_order": list(export.order),
            "diagnostics": diagnostics(traces, summary_config.interval_levels).to_dict(),
        }
        radius = None
        if truth is not None:
            reference = read_truth_tree(truth, trees.labels)
            radius = credible_radius(trees, reference, summary_config.level, summary_config.metric)
            payload["truth"] = {
                "level": summary_config.level,
                "metric": summary_config.metric,
                "credible_radius": radius,
                "distance": distance_summary(trees, reference, summary_config.metric),
            }
        write_json(out_dir / "summary.json", payload)
    typer.echo(tree.to_newick())
    if radius is not None:
        typer.echo(f"Raio do conjunto de credibilidade ({summary_config.level:g}): {format_float(radius)}")
    typer.echo(f"Resumos salvos em: {out_dir}")


@app.command("dist")
def dist(
    first: Path = typer.Argument(..., help="Primeira árvore (Newick)."),
    second: Path = typer.Argument(..., help="Segunda árvore (Newick)."),
) -> None:
    """Imprime a distância de Robinson-Foulds normalizada entre duas árvores."""

    with _user_errors():
        value = rf_distance(read_newick(first), read_newick(second), normalized=True)
    typer.echo(format_float(value))


@app.command("hclust")
def hclust(
    inputs: List[Path] = typer.Argument(..., help="Arquivos CSV de adjacência ou diretórios com *.csv."),
    out: Optional[Path] = typer.Option(None, "--out", help="Arquivo Newick de saída (opcional)."),
) -> None:
    """Árvore de referência por agrupamento hierárquico (ligação média)."""

    with _user_errors():
        tree = linkage_tree(load_networks(inputs))
        if out is not None:
            write_newick(out, tree)
    typer.echo(to_newick(tree))


@experiment_app.command("recovery")
def experiment_recovery(
    v: int = typer.Option(20, "--v", help="Número de nós."),
    m: int = typer.Option(20, "--m", help="Número de redes."),
    k: Optional[int] = typer.Option(None, "--k", help="Dimensão latente (padrão: K da configuração)."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    jobs: Optional[int] = JobsOption,
    out: Optional[Path] = OutOption,
) -> None:
    """Recuperação da árvore verdadeira a partir de dados simulados."""

    with _user_errors():
        run_config = _load_config(config, seed=seed, jobs=jobs, k=k)
        K = run_config.hyper.K
        result = tree_recovery(
            V=v,
            M=m,
            K=K,
            config=run_config.sampler,
            seed=run_config.sampler.seed,
            hyper=run_config.hyper,
            threshold=run_config.summary.threshold,
            level=run_config.summary.level,
            jobs=run_config.jobs,
        )
        out_dir = _output_dir(out)
        write_json(out_dir / "recovery.json", result.to_dict())
    for key, value in result.to_dict().items():
        typer.echo(f"{key}: {value}")


@experiment_app.command("concentration")
def experiment_concentration(
    v: int = typer.Option(20, "--v", help="Número de nós."),
    ms: str = typer.Option("1,10,20", "--ms", help="Quantidades de redes separadas por vírgula."),
    replicates: int = typer.Option(1, "--replicates", help="Réplicas independentes."),
    k: Optional[int] = typer.Option(None, "--k", help="Dimensão latente (padrão: K da configuração)."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    level: Optional[float] = typer.Option(None, "--level", help="Nível do conjunto de credibilidade."),
    jobs: Optional[int] = JobsOption,
    out: Optional[Path] = OutOption,
) -> None:
    """Raio do conjunto de credibilidade em torno da árvore verdadeira conforme M cresce."""

    with _user_errors():
        run_config = _load_config(config, seed=seed, jobs=jobs, k=k, level=level)
        counts = [int(item) for item in ms.split(",") if item.strip()]
        frame = concentration_curve(
            V=v,
            K=run_config.hyper.K,
            Ms=counts,
            replicates=replicates,
            config=run_config.sampler,
            seed=run_config.sampler.seed,
            level=run_config.summary.level,
            hyper=run_config.hyper,
            jobs=run_config.jobs,
        )
        out_dir = _output_dir(out)
        write_table(out_dir / "concentration.tsv", frame)
    typer.echo(frame.to_string(index=False))


if __name__ == "__main__":
    app()
