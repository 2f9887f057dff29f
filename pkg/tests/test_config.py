from __future__ import annotations

import pytest

from phylnet.config import get_settings, reload_settings
from phylnet.domain.entities import GenerativeScenario, ProbabilityScenario
from phylnet.domain.moves import MoveKind
from phylnet.domain.treecore import LeafSetMismatchError, from_newick
from phylnet.infrastructure.config_files import (
    ConfigError,
    load_run_config,
    parse_run_values,
    read_key_values,
    read_truth_tree,
    run_config_values,
    write_key_values,
)


def test_settings_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PHYLNET_SEED", "42")
    monkeypatch.setenv("PHYLNET_JOBS", "abc")
    reload_settings()
    settings = get_settings()
    assert settings.seed == 42
    assert settings.jobs is None
    assert settings.log_dir == tmp_path / "logs"


def test_defaults_without_file():
    config = load_run_config()
    assert config.hyper.K == 3
    assert config.sampler.n_iter == 20_000
    assert config.summary.threshold == 0.8
    assert config.jobs == 1


def test_precedence_flag_over_env_over_file(tmp_path, monkeypatch):
    path = tmp_path / "run.env"
    path.write_text("# execução curta\nSEED=1\nN_ITER=50\nBURN_IN=10\nMOVES_SPR=0\n")
    assert load_run_config(path).sampler.seed == 1
    monkeypatch.setenv("PHYLNET_SEED", "2")
    reload_settings()
    assert load_run_config(path).sampler.seed == 2
    config = load_run_config(path, {"SEED": 3, "THIN": None})
    assert config.sampler.seed == 3
    assert config.sampler.thin == 10
    assert config.sampler.tree_moves_per_sweep[MoveKind.SPR] == 0
    assert config.sampler.tree_moves_per_sweep[MoveKind.LOCAL_SPR] == 5


@pytest.mark.parametrize(
    ("values", "key"),
    [
        ({"UNKNOWN": "1"}, "UNKNOWN"),
        ({"N_ITER": "many"}, "N_ITER"),
        ({"N_ITER": "10", "BURN_IN": "10"}, "SAMPLER"),
        ({"K": "0"}, "HYPER"),
        ({"THRESHOLD": "0.3"}, "THRESHOLD"),
        ({"STORE_Z": "talvez"}, "STORE_Z"),
        ({"SCENARIO": "ring"}, "SCENARIO"),
        ({"JOBS": "0"}, "JOBS"),
    ],
)
def test_invalid_values_name_the_key(values, key):
    with pytest.raises(ConfigError) as info:
        parse_run_values(values)
    assert info.value.key == key
    assert str(info.value).startswith(f"{key}: ")


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "nope.env")


def test_effective_values_parse_back():
    config = parse_run_values({"K": "2", "INTERVAL_LEVELS": "0.5,0.9", "STORE_Z": "sim", "MOVES_TIPSINTERCHANGE": "2"})
    values = run_config_values(config)
    assert values["K"] == "2"
    assert values["STORE_Z"] == "true"
    assert values["INTERVAL_LEVELS"] == "0.5,0.9"
    assert parse_run_values(values) == config


def test_scenarios_build_from_settings(tmp_path):
    nwk = tmp_path / "truth.nwk"
    nwk.write_text("((A:0.5,B:0.5):0.5,C:1.0);\n")
    config = parse_run_values({"TREE": str(nwk), "M": "2"})
    spec = config.scenario.build(config.hyper.K)
    assert isinstance(spec, GenerativeScenario)
    assert spec.V == 3 and spec.M == 2
    assert spec.node_labels() == ("A", "B", "C")
    blocks = parse_run_values({"SCENARIO": "blocks", "V": "10", "COMMUNITIES": "2"}).scenario.build(3)
    assert isinstance(blocks, ProbabilityScenario)
    assert blocks.V == 10 and blocks.M == 10


def test_manifest_values_survive_quotes_and_comment_marks(tmp_path):
    newick = "(('Left Amygdala':0.5,'O''Brien':0.5):0.5,'#3':1.0);"
    path = write_key_values({"SEED": 5, "A0": 2.6, "TRUTH_NEWICK": newick}, tmp_path / "manifest.env")
    values = read_key_values(path)
    assert values == {"SEED": "5", "A0": "2.6", "TRUTH_NEWICK": newick}
    write_key_values({"SEED": 6}, path)
    assert read_key_values(path) == {"SEED": "6"}


def test_truth_tree_from_manifest_or_newick_file(tmp_path):
    newick = "((A:0.5,B:0.5):0.5,C:1.0);"
    manifest = write_key_values({"SEED": 1, "TRUTH_NEWICK": newick}, tmp_path / "truth_manifest.env")
    nwk = tmp_path / "truth.nwk"
    nwk.write_text(newick + "\n")
    assert read_truth_tree(manifest) == from_newick(newick)
    assert read_truth_tree(nwk, ["A", "B", "C"]) == from_newick(newick)
    with pytest.raises(LeafSetMismatchError):
        read_truth_tree(manifest, ["A", "B", "D"])
    without_tree = write_key_values({"SEED": 1}, tmp_path / "other.env")
    with pytest.raises(ConfigError) as info:
        read_truth_tree(without_tree)
    assert info.value.key == "TRUTH_NEWICK"
