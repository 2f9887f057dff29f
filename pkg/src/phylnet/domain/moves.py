"""Symmetric proposal kernels over ultrametric trees of height 1.

Every kernel satisfies q(t -> t') = q(t' -> t) with respect to counting
measure on topologies/labels and Lebesgue measure on internal ages, so the
Metropolis-Hastings ratio for a tree update is the ratio of target densities.
Draws that cannot produce a valid tree come back with ``feasible=False`` and
must be treated as a rejected no-op.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from phylnet.domain.treecore import PhyloTree, check, descendants, is_ancestor

DEFAULT_AGE_WINDOW = 0.1


class MoveKind(str, enum.Enum):
    TIPS_INTERCHANGE = "TipsInterchange"
    SUBTREE_EXCHANGE = "SubtreeExchange"
    NODE_AGE_MOVE = "NodeAgeMove"
    SPR = "SPR"
    LOCAL_SPR = "LocalSPR"


@dataclass(frozen=True, slots=True)
class MoveOutcome:
    """Resultado de uma proposta de árvore."""

    proposed: PhyloTree
    feasible: bool


# ---------------------------------------------------------------------------
# Deterministic building blocks


def swap_tips(tree: PhyloTree, first: int, second: int) -> PhyloTree:
    """Exchange the labels of two leaves; ages are untouched."""

    labels = list(tree.leaf_labels)
    labels[first], labels[second] = labels[second], labels[first]
    return tree.with_arrays(leaf_labels=labels)


def exchange_subtrees(tree: PhyloTree, first: int, second: int) -> PhyloTree:
    """Swap the attachment points of two non-nested subtrees."""

    parent = tree.parent.copy()
    children = tree.children.copy()
    p1, p2 = int(parent[first]), int(parent[second])
    children[p1][children[p1] == first] = second
    children[p2][children[p2] == second] = first
    parent[first], parent[second] = p2, p1
    return tree.with_arrays(parent=parent, children=children)


def set_node_age(tree: PhyloTree, node: int, age: float) -> PhyloTree:
    ages = tree.ages.copy()
    ages[node] = age
    return tree.with_arrays(ages=ages)


def _detach(tree: PhyloTree, node: int) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Remove ``node`` together with its parent; the sibling takes the parent's place."""

    parent = tree.parent.copy()
    children = tree.children.copy()
    p = int(parent[node])
    sibling = tree.sibling(node)
    grand = int(parent[p])
    parent[sibling] = grand
    if grand >= 0:
        children[grand][children[grand] == p] = sibling
    parent[p] = -1
    children[p] = (node, -1)
    return parent, children, p, sibling


def _spanning_edges(tree: PhyloTree, parent: np.ndarray, excluded: set[int], age: float) -> list[int]:
    """Lower nodes of pruned-tree edges whose age interval strictly contains ``age``."""

    edges = []
    for lower in range(tree.n_nodes):
        upper = int(parent[lower])
        if lower in excluded or upper < 0:
            continue
        if tree.ages[upper] < age < tree.ages[lower]:
            edges.append(lower)
    return edges


def _attach(children: np.ndarray, parent: np.ndarray, p: int, node: int, target: int) -> None:
    upper = int(parent[target])
    children[upper][children[upper] == target] = p
    parent[p] = upper
    children[p] = (node, target)
    parent[target] = p


def prune_and_regraft(tree: PhyloTree, node: int, target: int) -> PhyloTree:
    """Move the subtree at ``node`` onto the edge above ``target`` keeping its attachment age.

    ``target`` is a node of the pruned tree whose parent edge spans the age of
    ``node``'s parent; choosing the current sibling reproduces the input tree.
    """

    parent, children, p, sibling = _detach(tree, node)
    if target == sibling and int(parent[sibling]) < 0:
        return tree
    _attach(children, parent, p, node, target)
    # keep the original child order on the identity move
    if target == sibling and int(tree.children[p][0]) == sibling:
        children[p] = (sibling, node)
    return tree.with_arrays(parent=parent, children=children)


# ---------------------------------------------------------------------------
# Kernels


def _reflect(value: float, low: float, high: float) -> float:
    width = high - low
    shifted = (value - low) % (2.0 * width)
    if shifted > width:
        shifted = 2.0 * width - shifted
    return low + shifted


def _tips_interchange(tree: PhyloTree, rng: np.random.Generator) -> MoveOutcome:
    first, second = rng.choice(tree.n_leaves, size=2, replace=False)
    return MoveOutcome(swap_tips(tree, int(first), int(second)), True)


def _subtree_exchange(tree: PhyloTree, rng: np.random.Generator) -> MoveOutcome:
    root = tree.root
    candidates = [n for n in range(tree.n_nodes) if n != root]
    i, j = rng.choice(len(candidates), size=2, replace=False)
    first, second = candidates[int(i)], candidates[int(j)]
    p1, p2 = int(tree.parent[first]), int(tree.parent[second])
    if (
        p1 == p2
        or is_ancestor(tree, first, second)
        or is_ancestor(tree, second, first)
        or not tree.ages[p2] < tree.ages[first]
        or not tree.ages[p1] < tree.ages[second]
    ):
        return MoveOutcome(tree, False)
    return MoveOutcome(exchange_subtrees(tree, first, second), True)


def _node_age_move(tree: PhyloTree, rng: np.random.Generator, age_window: float) -> MoveOutcome:
    root = tree.root
    internal = [n for n in range(tree.n_leaves, tree.n_nodes) if n != root]
    if not internal:
        return MoveOutcome(tree, False)
    node = internal[int(rng.integers(len(internal)))]
    low = float(tree.ages[int(tree.parent[node])])
    high = float(min(tree.ages[int(c)] for c in tree.children[node]))
    proposed = _reflect(float(tree.ages[node]) + rng.uniform(-age_window, age_window), low, high)
    if not low < proposed < high:
        return MoveOutcome(tree, False)
    return MoveOutcome(set_node_age(tree, node, proposed), True)


def _pick_pruned(tree: PhyloTree, rng: np.random.Generator) -> int:
    root = tree.root
    candidates = [n for n in range(tree.n_nodes) if n != root]
    return candidates[int(rng.integers(len(candidates)))]


def _spr(tree: PhyloTree, rng: np.random.Generator) -> MoveOutcome:
    node = _pick_pruned(tree, rng)
    parent, children, p, sibling = _detach(tree, node)
    if int(parent[sibling]) < 0:  # pruned at the root: only the identity regraft exists
        return MoveOutcome(tree, True)
    excluded = descendants(tree, node) | {p}
    edges = _spanning_edges(tree, parent, excluded, float(tree.ages[p]))
    target = edges[int(rng.integers(len(edges)))]
    return MoveOutcome(prune_and_regraft(tree, node, target), True)


def _pruned_mrca(parent: np.ndarray, first: int, second: int) -> int:
    ancestors = set()
    current = first
    while current >= 0:
        ancestors.add(current)
        current = int(parent[current])
    current = second
    while current not in ancestors:
        current = int(parent[current])
    return current


def _local_neighbours(parent: np.ndarray, edges: list[int], edge: int) -> list[int]:
    upper = int(parent[edge])
    local = []
    for other in edges:
        mrca = _pruned_mrca(parent, edge, other)
        if other == edge or mrca == upper or mrca == int(parent[other]):
            local.append(other)
    return local


def _local_spr(tree: PhyloTree, rng: np.random.Generator) -> MoveOutcome:
    node = _pick_pruned(tree, rng)
    parent, children, p, sibling = _detach(tree, node)
    if int(parent[sibling]) < 0:
        return MoveOutcome(tree, True)
    excluded = descendants(tree, node) | {p}
    edges = _spanning_edges(tree, parent, excluded, float(tree.ages[p]))
    forward = _local_neighbours(parent, edges, sibling)
    target = forward[int(rng.integers(len(forward)))]
    backward = _local_neighbours(parent, edges, target)
    # thinning by min(1, |N(e)|/|N(e')|) makes q(e -> e') = min(1/|N(e)|, 1/|N(e')|)
    if rng.random() >= min(1.0, len(forward) / len(backward)):
        return MoveOutcome(tree, False)
    return MoveOutcome(prune_and_regraft(tree, node, target), True)


def propose(
    tree: PhyloTree,
    kind: MoveKind,
    rng: np.random.Generator,
    age_window: float = DEFAULT_AGE_WINDOW,
) -> MoveOutcome:
    """Draw one proposal of the given kind."""

    check(tree)
    if not age_window > 0:
        raise ValueError("age_window must be positive")
    kind = MoveKind(kind)
    if kind is MoveKind.TIPS_INTERCHANGE:
        return _tips_interchange(tree, rng)
    if kind is MoveKind.SUBTREE_EXCHANGE:
        return _subtree_exchange(tree, rng)
    if kind is MoveKind.NODE_AGE_MOVE:
        return _node_age_move(tree, rng, age_window)
    if kind is MoveKind.SPR:
        return _spr(tree, rng)
    return _local_spr(tree, rng)


def propose_random(
    tree: PhyloTree,
    rng: np.random.Generator,
    age_window: float = DEFAULT_AGE_WINDOW,
) -> tuple[MoveKind, MoveOutcome]:
    """Pick a move kind uniformly and delegate to :func:`propose`."""

    kinds = list(MoveKind)
    kind = kinds[int(rng.integers(len(kinds)))]
    return kind, propose(tree, kind, rng, age_window)
