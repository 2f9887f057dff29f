"""File repositories: adjacency CSVs, sample logs, Newick files and JSON reports."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from phylnet.domain.entities import PosteriorSample
from phylnet.domain.model import NetworkData
from phylnet.domain.treecore import PhyloTree, from_newick, read_newick_lines, to_newick
from phylnet.domain.validators import DataValidationError, build_network_data

LOGGER = logging.getLogger(__name__)

SAMPLE_COLUMNS = ("chain", "iter", "a", "sigma2", "b", "newick")
NEWICK_SUFFIXES = (".nwk", ".newick", ".tre", ".trees")
_BINARY_TOKENS = {"0", "1"}


# ---------------------------------------------------------------------------
# Adjacency CSV


def read_adjacency_csv(path: Path) -> tuple[Optional[tuple[str, ...]], np.ndarray]:
    """Return ``(header labels or None, matrix)``; a first row with any non-0/1 token is a header."""

    if not path.exists():
        raise FileNotFoundError(path)
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise DataValidationError("empty adjacency file", path) from exc
    except pd.errors.ParserError as exc:
        raise DataValidationError(f"malformed CSV ({exc})", path) from exc
    if frame.empty:
        raise DataValidationError("empty adjacency file", path)
    frame = frame.apply(lambda column: column.str.strip())
    header: Optional[tuple[str, ...]] = None
    if any(token not in _BINARY_TOKENS for token in frame.iloc[0]):
        header = tuple(frame.iloc[0])
        frame = frame.iloc[1:]
    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    invalid = ~np.isin(values, (0.0, 1.0))
    if invalid.any():
        v, u = np.argwhere(invalid)[0]
        raise DataValidationError("non-binary entry", path, (int(v) + 1, int(u) + 1))
    if header is not None and len(header) != values.shape[1]:
        raise DataValidationError(f"header has {len(header)} labels for {values.shape[1]} columns", path)
    return header, values.astype(np.int8)


def write_adjacency_csv(path: Path, matrix: np.ndarray, labels: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.asarray(matrix, dtype=int), columns=list(labels))
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def expand_network_paths(inputs: Iterable[Path]) -> list[Path]:
    """Directories expand to their ``*.csv`` files in lexicographic order; files keep the given order."""

    paths: list[Path] = []
    for item in inputs:
        if item.is_dir():
            paths.extend(sorted(item.glob("*.csv")))
        elif not item.exists():
            raise FileNotFoundError(item)
        else:
            paths.append(item)
    return paths


def load_networks(inputs: Iterable[Path]) -> NetworkData:
    paths = expand_network_paths(inputs)
    if not paths:
        raise DataValidationError("no adjacency CSV files found")
    headers, matrices = zip(*(read_adjacency_csv(path) for path in paths))
    data = build_network_data(list(matrices), list(headers), paths)
    LOGGER.info("Carregadas %d redes com %d nós", data.M, data.V)
    return data


def network_file_name(index: int) -> str:
    return f"network_{index + 1:03d}.csv"


def write_networks(out_dir: Path, data: NetworkData) -> list[Path]:
    return [
        write_adjacency_csv(out_dir / network_file_name(m), data.adjacency[m], data.labels) for m in range(data.M)
    ]


# ---------------------------------------------------------------------------
# Sample logs


def sample_log_name(chain: int) -> str:
    return f"chain_{chain}.samples.tsv"


def _format_z(z: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in np.asarray(z, dtype=float).ravel())


class SampleLogWriter:
    """Append-only tab-separated log owned by one chain."""

    def __init__(self, path: Path, store_z: bool = False) -> None:
        self.path = path
        self.store_z = store_z
        self.columns = list(SAMPLE_COLUMNS) + (["z"] if store_z else [])
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(columns=self.columns).to_csv(path, sep="\t", index=False, lineterminator="\n")

    def __call__(self, sample: PosteriorSample) -> None:
        row = {
            "chain": str(sample.chain),
            "iter": str(sample.iteration),
            "a": repr(float(sample.a)),
            "sigma2": repr(float(sample.sigma2)),
            "b": repr(float(sample.b)),
            "newick": sample.newick,
        }
        if self.store_z:
            row["z"] = _format_z(sample.z) if sample.z is not None else ""
        frame = pd.DataFrame([row], columns=self.columns)
        frame.to_csv(self.path, sep="\t", index=False, header=False, mode="a", lineterminator="\n")


class SampleLogFactory:
    """Picklable ``chain -> writer`` factory for process pools."""

    def __init__(self, out_dir: Path, store_z: bool = False) -> None:
        self.out_dir = out_dir
        self.store_z = store_z

    def __call__(self, chain: int) -> SampleLogWriter:
        return SampleLogWriter(self.out_dir / sample_log_name(chain), self.store_z)


def read_sample_log(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        frame = pd.read_csv(path, sep="\t", dtype={"newick": str, "z": str}, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise ValueError(f"{path}: empty sample log") from exc
    missing = set(SAMPLE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return frame


def read_sample_logs(paths: Sequence[Path]) -> pd.DataFrame:
    """Concatenate logs in the given order; raises when no sample row is present."""

    frames = [read_sample_log(path) for path in paths]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(SAMPLE_COLUMNS))
    if frame.empty:
        raise ValueError("sample logs contain no samples")
    return frame


def samples_from_frame(frame: pd.DataFrame) -> list[PosteriorSample]:
    return [
        PosteriorSample(
            chain=int(row.chain),
            iteration=int(row.iter),
            a=float(row.a),
            sigma2=float(row.sigma2),
            b=float(row.b),
            newick=str(row.newick),
        )
        for row in frame.itertuples(index=False)
    ]


# ---------------------------------------------------------------------------
# Newick, tables and JSON


def write_newick(path: Path, tree: PhyloTree | str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = tree if isinstance(tree, str) else to_newick(tree)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_newick(path: Path, expected_leaves: Optional[Iterable[str]] = None) -> PhyloTree:
    if not path.exists():
        raise FileNotFoundError(path)
    return from_newick(path.read_text(encoding="utf-8").strip(), expected_leaves)


def is_newick_file(path: Path) -> bool:
    return path.suffix.lower() in NEWICK_SUFFIXES


def read_newick_file(path: Path, expected_leaves: Optional[Iterable[str]] = None) -> list[PhyloTree]:
    """All trees of a multi-tree file (one Newick per line)."""

    if not path.exists():
        raise FileNotFoundError(path)
    trees = read_newick_lines(path.read_text(encoding="utf-8"), expected_leaves)
    LOGGER.debug("Lidas %d árvores de %s", len(trees), path)
    return trees


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_table(path: Path, frame: pd.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return path


def write_json(path: Path, payload: Any) -> Path:
    """Pretty JSON with sorted keys; NaN and infinities are rejected."""

    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    return write_text(path, text + "\n")
