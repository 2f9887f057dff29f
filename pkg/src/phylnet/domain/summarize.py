"""Posterior summaries: consensus tree, DensiTree export, credible radius and trace diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import dendropy
import numpy as np
import pandas as pd

from phylnet.domain.entities import PosteriorSample, natural_key
from phylnet.domain.treecore import (
    InvalidTreeError,
    LeafSetMismatchError,
    PhyloTree,
    Split,
    clades,
    format_float,
    from_newick,
    leaf_indices_below,
    newick_string,
    postorder,
    preorder,
    rf_distance,
    taxon_namespace,
    to_dendropy,
    to_newick,
)

LOGGER = logging.getLogger(__name__)

TreeMetric = Callable[[PhyloTree, PhyloTree], float]

CONSENSUS_AGE_GAP = 1e-6


def normalized_rf(first: PhyloTree, second: PhyloTree) -> float:
    return rf_distance(first, second, normalized=True)


TREE_METRICS: dict[str, TreeMetric] = {"rf": normalized_rf}


def get_metric(name: str) -> TreeMetric:
    try:
        return TREE_METRICS[name]
    except KeyError as exc:
        raise ValueError(f"unknown tree metric {name!r}; available: {sorted(TREE_METRICS)}") from exc


@dataclass(frozen=True, slots=True)
class TreeSampleSet:
    """Árvores amostradas (mesmo conjunto de folhas), na ordem dos logs."""

    trees: tuple[PhyloTree, ...]

    def __post_init__(self) -> None:
        trees = tuple(self.trees)
        if not trees:
            raise ValueError("tree sample set is empty")
        labels = trees[0].label_set
        for tree in trees[1:]:
            if tree.label_set != labels:
                raise LeafSetMismatchError("sampled trees have different leaf sets")
        object.__setattr__(self, "trees", trees)

    @classmethod
    def from_newick(cls, lines: Iterable[str]) -> "TreeSampleSet":
        return cls(tuple(from_newick(line) for line in lines if line.strip()))

    @classmethod
    def from_samples(cls, samples: Iterable[PosteriorSample]) -> "TreeSampleSet":
        return cls.from_newick(sample.newick for sample in samples)

    @property
    def labels(self) -> frozenset[str]:
        return self.trees[0].label_set

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)


# ---------------------------------------------------------------------------
# Consensus


@dataclass(slots=True)
class ConsensusNode:
    clade: Split
    age: float
    support: float
    children: list["ConsensusNode"] = field(default_factory=list)
    label: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass(slots=True)
class ConsensusTree:
    """Árvore de consenso (possivelmente multifurcada) com suportes e idades médias."""

    root: ConsensusNode
    threshold: float
    n_samples: int

    @property
    def labels(self) -> frozenset[str]:
        return self.root.clade

    def nodes(self) -> list[ConsensusNode]:
        stack, out = [self.root], []
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(node.children))
        return out

    @property
    def splits(self) -> set[Split]:
        return {node.clade for node in self.nodes() if node is not self.root and not node.is_leaf}

    @property
    def supports(self) -> dict[Split, float]:
        return {node.clade: node.support for node in self.nodes() if node is not self.root and not node.is_leaf}

    @property
    def is_binary(self) -> bool:
        return all(len(node.children) == 2 for node in self.nodes() if not node.is_leaf)

    def leaf_order(self) -> list[str]:
        return [node.label for node in self.nodes() if node.is_leaf]  # type: ignore[misc]

    def to_dendropy(self, support: bool = True) -> dendropy.Tree:
        """Rooted dendropy tree; internal nodes carry a ``support`` annotation when requested."""

        namespace = taxon_namespace(sorted(self.labels, key=natural_key))

        def build(node: ConsensusNode, parent_age: Optional[float]) -> dendropy.Node:
            if node.is_leaf:
                item = dendropy.Node(taxon=namespace.require_taxon(label=node.label))
            else:
                item = dendropy.Node()
                for child in node.children:
                    item.add_child(build(child, node.age))
                if support and node is not self.root:
                    item.annotations.add_new("support", format_float(node.support))
            if parent_age is not None:
                item.edge.length = node.age - parent_age
            return item

        result = dendropy.Tree(seed_node=build(self.root, None), taxon_namespace=namespace)
        result.is_rooted = True
        return result

    def to_newick(self, support: bool = True) -> str:
        """Newick with ``[&support=...]`` comments on internal nodes."""

        return newick_string(self.to_dendropy(support), annotations=support)

    def to_tree(self) -> PhyloTree:
        """Binary consensus as a :class:`PhyloTree`; raises when unresolved."""

        if not self.is_binary:
            raise InvalidTreeError("consensus tree is multifurcating")
        return from_newick(self.to_newick(support=False))


def count_clades(samples: TreeSampleSet) -> tuple[dict[int, int], dict[int, float], dict[int, Split]]:
    """Per rooted bipartition bitmask: sample count, summed node age and the clade it encodes."""

    namespace = taxon_namespace(sorted(samples.labels, key=natural_key))
    counts: dict[int, int] = {}
    age_sums: dict[int, float] = {}
    clade_of: dict[int, Split] = {}
    for tree in samples:
        converted = to_dendropy(tree, namespace)
        converted.encode_bipartitions()
        root = tree.root
        labels = clades(tree)
        for node, item in zip(preorder(tree), converted.preorder_node_iter()):
            if tree.is_leaf(node) or node == root:
                continue
            mask = item.edge.bipartition.leafset_bitmask
            counts[mask] = counts.get(mask, 0) + 1
            age_sums[mask] = age_sums.get(mask, 0.0) + float(tree.ages[node])
            clade_of.setdefault(mask, labels[node])
    return counts, age_sums, clade_of


def consensus(samples: TreeSampleSet, p: float = 0.8) -> ConsensusTree:
    """Keep every split whose sample frequency exceeds ``p`` and average node ages over supporters.

    Averages taken over different supporting samples can leave a clade older
    than its consensus parent; such ages are moved just past the parent's
    so that every branch stays positive.
    """

    if not 0.5 <= p < 1.0:
        raise ValueError("consensus threshold must lie in [0.5, 1)")
    n = len(samples)
    counts, age_sums, clade_of = count_clades(samples)
    retained = [mask for mask, count in counts.items() if count / n > p]
    labels = samples.labels

    root = ConsensusNode(clade=labels, age=0.0, support=1.0)
    # larger clades first so every clade finds its smallest retained superset already placed
    placed: list[ConsensusNode] = [root]
    for mask in sorted(retained, key=lambda m: (-len(clade_of[m]), sorted(clade_of[m], key=natural_key))):
        clade = clade_of[mask]
        node = ConsensusNode(clade=clade, age=age_sums[mask] / counts[mask], support=counts[mask] / n)
        parent = min((cand for cand in placed if clade < cand.clade), key=lambda c: len(c.clade))
        parent.children.append(node)
        placed.append(node)
    for label in labels:
        leaf = ConsensusNode(clade=frozenset({label}), age=1.0, support=1.0, label=label)
        parent = min((cand for cand in placed if label in cand.clade), key=lambda c: len(c.clade))
        parent.children.append(leaf)

    def arrange(node: ConsensusNode) -> None:
        node.children.sort(key=lambda child: min((natural_key(x) for x in child.clade)))
        for child in node.children:
            if not child.is_leaf and child.age <= node.age:
                child.age = node.age + min(CONSENSUS_AGE_GAP, (1.0 - node.age) / 2.0)
            arrange(child)

    arrange(root)
    LOGGER.debug("Consensus at p=%.2f keeps %d of %d distinct splits", p, len(retained), len(counts))
    return ConsensusTree(root=root, threshold=p, n_samples=n)


# ---------------------------------------------------------------------------
# DensiTree


@dataclass(frozen=True, slots=True)
class DensiTreeExport:
    """Linhas Newick com ordem de folhas comum e tabela de coordenadas (x=idade, y=posição)."""

    order: tuple[str, ...]
    newick_lines: tuple[str, ...]
    coordinates: pd.DataFrame

    def newick_text(self) -> str:
        return "".join(line + "\n" for line in self.newick_lines)


def rotate_to_order(tree: PhyloTree, order: Sequence[str]) -> PhyloTree:
    """Swap children so each left subtree holds the lower-ranked leaf."""

    rank = {label: i for i, label in enumerate(order)}
    if set(rank) != set(tree.leaf_labels):
        raise LeafSetMismatchError("leaf order does not match the tree leaves")
    below = leaf_indices_below(tree)
    first = {node: min(rank[tree.leaf_labels[i]] for i in leaves) for node, leaves in below.items()}
    children = tree.children.copy()
    for node in range(tree.n_leaves, tree.n_nodes):
        left, right = (int(c) for c in children[node])
        if first[left] > first[right]:
            children[node] = (right, left)
    return tree.with_arrays(children=children)


def tree_layout(tree: PhyloTree, order: Sequence[str]) -> list[dict[str, object]]:
    rank = {label: i for i, label in enumerate(order)}
    y: dict[int, float] = {}
    rows = []
    for node in postorder(tree):
        if tree.is_leaf(node):
            y[node] = float(rank[tree.leaf_labels[node]])
            label = tree.leaf_labels[node]
        else:
            y[node] = float(np.mean([y[int(c)] for c in tree.children[node]]))
            label = ""
        rows.append(
            {
                "node": node,
                "parent": int(tree.parent[node]),
                "label": label,
                "x": float(tree.ages[node]),
                "y": y[node],
            }
        )
    rows.sort(key=lambda row: row["node"])
    return rows


def densitree_export(samples: TreeSampleSet, order: Optional[Sequence[str]] = None) -> DensiTreeExport:
    """All samples under one leaf ordering (consensus order at 0.5 by default)."""

    if order is None:
        order = consensus(samples, 0.5).leaf_order()
    order = tuple(order)
    lines: list[str] = []
    rows: list[dict[str, object]] = []
    for index, tree in enumerate(samples):
        rotated = rotate_to_order(tree, order)
        lines.append(to_newick(rotated))
        rows.extend({"tree": index, **row} for row in tree_layout(rotated, order))
    coordinates = pd.DataFrame(rows, columns=["tree", "node", "parent", "label", "x", "y"])
    return DensiTreeExport(order=order, newick_lines=tuple(lines), coordinates=coordinates)


# ---------------------------------------------------------------------------
# Distances to a reference tree


def distances_to(samples: TreeSampleSet, reference: PhyloTree, metric: str = "rf") -> np.ndarray:
    if samples.labels != reference.label_set:
        raise LeafSetMismatchError("reference tree leaves differ from the samples")
    fn = get_metric(metric)
    return np.array([fn(tree, reference) for tree in samples], dtype=float)


def credible_radius(samples: TreeSampleSet, reference: PhyloTree, level: float = 0.9, metric: str = "rf") -> float:
    """Largest distance among the ``ceil(level * n)`` samples closest to ``reference``."""

    if not 0.0 < level <= 1.0:
        raise ValueError("level must lie in (0, 1]")
    distances = np.sort(distances_to(samples, reference, metric))
    rank = max(1, math.ceil(level * distances.size - 1e-9))
    return float(distances[rank - 1])


def distance_summary(samples: TreeSampleSet, reference: PhyloTree, metric: str = "rf") -> dict[str, float]:
    """Mean with 5% and 95% quantiles of the distance to ``reference``."""

    distances = distances_to(samples, reference, metric)
    return {
        "mean": float(distances.mean()),
        "q05": float(np.quantile(distances, 0.05)),
        "q95": float(np.quantile(distances, 0.95)),
    }


# ---------------------------------------------------------------------------
# Scalar trace diagnostics


def effective_sample_size(trace: Sequence[float]) -> float:
    """Batch-means ESS with ``floor(sqrt(n))`` observations per batch."""

    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    size = int(math.isqrt(n))
    n_batches = n // size
    means = x[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    variance = x.var(ddof=1)
    batch_variance = size * means.var(ddof=1)
    if variance == 0.0 or batch_variance == 0.0:
        return float(n)
    return float(n * variance / batch_variance)


def potential_scale_reduction(chains: Sequence[Sequence[float]]) -> float:
    """Split-chain R-hat; each chain is cut in two halves."""

    if len(chains) < 2:
        raise ValueError("potential scale reduction needs at least 2 chains")
    length = min(len(chain) for chain in chains) // 2
    if length < 2:
        raise ValueError("chains are too short for the potential scale reduction")
    halves = []
    for chain in chains:
        x = np.asarray(chain, dtype=float)
        halves.extend([x[:length], x[length : 2 * length]])
    block = np.stack(halves)
    within = float(block.var(axis=1, ddof=1).mean())
    between = length * float(block.mean(axis=1).var(ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    pooled = (length - 1) / length * within + between / length
    return math.sqrt(pooled / within)


def credible_interval(trace: Sequence[float], level: float) -> tuple[float, float]:
    """Central interval with ``level`` posterior mass."""

    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    x = np.asarray(trace, dtype=float)
    lower, upper = np.quantile(x, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return float(lower), float(upper)


@dataclass(frozen=True, slots=True)
class TraceSummary:
    n: int
    mean: float
    ess: float
    intervals: dict[float, tuple[float, float]]

    @classmethod
    def of(cls, trace: Sequence[float], levels: Sequence[float]) -> "TraceSummary":
        x = np.asarray(trace, dtype=float)
        if x.size == 0:
            return cls(n=0, mean=float("nan"), ess=0.0, intervals={})
        return cls(
            n=int(x.size),
            mean=float(x.mean()),
            ess=effective_sample_size(x),
            intervals={level: credible_interval(x, level) for level in levels},
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "n": self.n,
            "mean": self.mean if math.isfinite(self.mean) else None,
            "ess": self.ess,
            "intervals": {format_float(level): list(bounds) for level, bounds in self.intervals.items()},
        }


@dataclass(frozen=True, slots=True)
class ParameterDiagnostics:
    per_chain: tuple[TraceSummary, ...]
    pooled: TraceSummary
    rhat: Optional[float]

    def to_dict(self) -> dict[str, object]:
        return {
            "per_chain": [summary.to_dict() for summary in self.per_chain],
            "pooled": self.pooled.to_dict(),
            "rhat": self.rhat if self.rhat is not None and math.isfinite(self.rhat) else None,
        }


@dataclass(frozen=True, slots=True)
class DiagnosticsReport:
    """Resumo por cadeia e agregado dos traços escalares."""

    parameters: dict[str, ParameterDiagnostics]
    levels: tuple[float, ...]
    extra: dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict[str, object]:
        return {
            "levels": list(self.levels),
            "parameters": {name: diag.to_dict() for name, diag in self.parameters.items()},
            **self.extra,
        }


def diagnostics(
    traces: Mapping[str, Sequence[Sequence[float]]],
    levels: Sequence[float] = (0.5, 0.9, 0.95),
) -> DiagnosticsReport:
    """Per-chain and pooled summaries; R-hat is ``None`` with a single chain."""

    parameters: dict[str, ParameterDiagnostics] = {}
    for name, chains in traces.items():
        chains = [np.asarray(chain, dtype=float) for chain in chains]
        pooled = np.concatenate(chains) if chains else np.array([])
        rhat: Optional[float] = None
        if len(chains) >= 2 and min(chain.size for chain in chains) >= 4:
            rhat = potential_scale_reduction(chains)
        parameters[name] = ParameterDiagnostics(
            per_chain=tuple(TraceSummary.of(chain, levels) for chain in chains),
            pooled=TraceSummary.of(pooled, levels),
            rhat=rhat,
        )
    return DiagnosticsReport(parameters=parameters, levels=tuple(levels))
