"""Agglomerative baseline tree built from pooled edge frequencies."""

from __future__ import annotations

import logging

import numpy as np
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from phylnet.domain.model import NetworkData
from phylnet.domain.treecore import PhyloTree, check, preorder

LOGGER = logging.getLogger(__name__)

MAX_INTERNAL_AGE = 1.0 - 1e-6
MIN_AGE_GAP = 1e-9


def dissimilarity(data: NetworkData) -> np.ndarray:
    """``1 - sum_m A^(m) / M`` with a zero diagonal."""

    D = 1.0 - data.adjacency.sum(axis=0) / data.M
    np.fill_diagonal(D, 0.0)
    return D


def linkage_tree(data: NetworkData, method: str = "average") -> PhyloTree:
    """Hierarchical clustering of the nodes mapped to an ultrametric tree of height 1.

    Merge heights ``h`` become ages ``1 - h / h_root``; ties are nudged so every
    branch keeps a positive length.
    """

    V = data.V
    if V < 2:
        raise ValueError("at least two nodes are required")
    links = hierarchy.linkage(squareform(dissimilarity(data), checks=False), method=method)
    n_nodes = 2 * V - 1
    parent = np.full(n_nodes, -1, dtype=np.int64)
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    heights = np.zeros(n_nodes)
    for step, (left, right, height, _count) in enumerate(links):
        node = V + step
        children[node] = (int(left), int(right))
        parent[int(left)] = node
        parent[int(right)] = node
        heights[node] = height
    root_height = heights[-1]
    ages = np.ones(n_nodes)
    internal = slice(V, n_nodes)
    if root_height > 0:
        ages[internal] = np.minimum(1.0 - heights[internal] / root_height, MAX_INTERNAL_AGE)
    else:
        ages[internal] = 0.0
    ages[-1] = 0.0
    tree = PhyloTree(parent=parent, children=children, ages=ages, leaf_labels=data.labels)
    # equal merge heights get a positive gap
    for node in preorder(tree):
        p = int(parent[node])
        if p >= 0 and node >= V and ages[node] <= ages[p]:
            ages[node] = ages[p] + MIN_AGE_GAP
    LOGGER.debug("Linkage tree built for %d nodes (root height %.4f)", V, root_height)
    return check(tree.with_arrays(ages=ages))
