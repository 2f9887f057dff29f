from __future__ import annotations

import numpy as np
import pytest

from phylnet.config import reload_settings
from phylnet.domain.treecore import from_newick


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch: pytest.MonkeyPatch):
    """Logs e resultados em diretório temporário; sem sobreposições de semente/jobs."""

    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("PHYLNET_OUT_DIR", str(tmp_path / "resultados"))
    monkeypatch.delenv("PHYLNET_SEED", raising=False)
    monkeypatch.delenv("PHYLNET_JOBS", raising=False)
    reload_settings()
    yield
    reload_settings()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def three_leaf_tree():
    return from_newick("((A:0.4,B:0.4):0.6,C:1.0);")


@pytest.fixture
def four_leaf_tree():
    return from_newick("(((A:0.5,B:0.5):0.2,C:0.7):0.3,D:1.0);")
