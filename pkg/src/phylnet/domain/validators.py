"""Domain level validations for network inputs."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from phylnet.domain.entities import default_labels
from phylnet.domain.model import NetworkData


class DataValidationError(ValueError):
    """Invalid adjacency input; ``cell`` is a 1-based ``(v, u)`` pair when known."""

    def __init__(self, message: str, path: Optional[Path] = None, cell: Optional[tuple[int, int]] = None) -> None:
        prefix = f"{path}: " if path is not None else ""
        suffix = f" at cell ({cell[0]}, {cell[1]})" if cell is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")
        self.path = path
        self.cell = cell


def _first_cell(mask: np.ndarray) -> tuple[int, int]:
    v, u = np.argwhere(mask)[0]
    return int(v) + 1, int(u) + 1


def validate_adjacency(matrix: np.ndarray, path: Optional[Path] = None) -> np.ndarray:
    """Check a single matrix: square, 0/1, zero diagonal, symmetric."""

    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DataValidationError(f"adjacency matrix must be square, got shape {matrix.shape}", path)
    if matrix.shape[0] < 2:
        raise DataValidationError("adjacency matrix needs at least 2 nodes", path)
    binary = (matrix == 0) | (matrix == 1)
    if not binary.all():
        raise DataValidationError("non-binary entry", path, _first_cell(~binary))
    diagonal = np.diag(matrix) != 0
    if diagonal.any():
        index = int(np.flatnonzero(diagonal)[0]) + 1
        raise DataValidationError("non-zero diagonal entry", path, (index, index))
    asymmetric = matrix != matrix.T
    if asymmetric.any():
        raise DataValidationError("asymmetric matrix", path, _first_cell(asymmetric))
    return matrix.astype(np.int8)


def resolve_labels(headers: Sequence[Optional[tuple[str, ...]]], V: int, paths: Sequence[Optional[Path]]) -> tuple[str, ...]:
    """Common node labels: every header present must agree; ``v1..vV`` when none is given."""

    labels: Optional[tuple[str, ...]] = None
    for header, path in zip(headers, paths):
        if header is None:
            continue
        if len(set(header)) != len(header):
            raise DataValidationError("duplicate node labels in header", path)
        if labels is None:
            labels = header
        elif header != labels:
            raise DataValidationError("node labels differ from the first network", path)
    return labels if labels is not None else default_labels(V)


def build_network_data(
    matrices: Sequence[np.ndarray],
    headers: Sequence[Optional[tuple[str, ...]]],
    paths: Sequence[Optional[Path]],
) -> NetworkData:
    """Validate every matrix and stack them into :class:`NetworkData`."""

    if not matrices:
        raise DataValidationError("no adjacency matrices given")
    checked = [validate_adjacency(matrix, path) for matrix, path in zip(matrices, paths)]
    V = checked[0].shape[0]
    for matrix, path in zip(checked, paths):
        if matrix.shape[0] != V:
            raise DataValidationError(f"dimension mismatch: expected {V} nodes, got {matrix.shape[0]}", path)
    labels = resolve_labels(headers, V, paths)
    return NetworkData(labels=labels, adjacency=np.stack(checked))
