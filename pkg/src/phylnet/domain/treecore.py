"""Rooted binary ultrametric trees: validation, Yule prior, splits and Newick I/O (via dendropy)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import dendropy
import numpy as np
from dendropy.utility.error import DataParseError as DataError

ULTRAMETRIC_TOLERANCE = 1e-9
NEWICK_DIGITS = 12

Split = frozenset[str]


class InvalidTreeError(ValueError):
    """Raised when an operation receives a tree that breaks a PhyloTree invariant."""


class LeafSetMismatchError(ValueError):
    """Raised when two trees (or a tree and a dataset) disagree on leaf labels."""


class NewickParseError(ValueError):
    """Malformed Newick input; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (offset {offset})")
        self.message = message
        self.offset = offset


class UltrametricityError(NewickParseError):
    """Root-to-leaf path lengths differ from 1 beyond tolerance."""


@dataclass(frozen=True, slots=True)
class YuleParams:
    """Taxa de nascimento do processo de Yule."""

    b: float

    def __post_init__(self) -> None:
        if not self.b > 0:
            raise ValueError(f"Yule birth rate must be positive, got {self.b}")


@dataclass(frozen=True, slots=True)
class PhyloTree:
    """Node table of a rooted tree with ages measured from the root.

    Leaves are nodes ``0..V-1`` and ``leaf_labels[i]`` names leaf ``i``;
    internal nodes follow. ``parent`` holds -1 at the root and ``children``
    holds -1 where a child is missing. Instances are not validated on
    construction, use :func:`validate` or :func:`check`.
    """

    parent: np.ndarray
    children: np.ndarray
    ages: np.ndarray
    leaf_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        parent = np.array(self.parent, dtype=np.int64)
        children = np.array(self.children, dtype=np.int64).reshape(-1, 2)
        ages = np.array(self.ages, dtype=float)
        for array in (parent, children, ages):
            array.setflags(write=False)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "leaf_labels", tuple(self.leaf_labels))

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_labels)

    @property
    def n_nodes(self) -> int:
        return int(self.parent.shape[0])

    @property
    def root(self) -> int:
        roots = np.flatnonzero(self.parent < 0)
        if roots.size != 1:
            raise InvalidTreeError("tree must have exactly one root")
        return int(roots[0])

    @property
    def label_set(self) -> frozenset[str]:
        return frozenset(self.leaf_labels)

    def is_leaf(self, node: int) -> bool:
        return node < self.n_leaves

    def sibling(self, node: int) -> int:
        p = int(self.parent[node])
        if p < 0:
            return -1
        left, right = (int(c) for c in self.children[p])
        return right if left == node else left

    def leaf_index(self, label: str) -> int:
        return self.leaf_labels.index(label)

    def with_arrays(
        self,
        parent: Optional[np.ndarray] = None,
        children: Optional[np.ndarray] = None,
        ages: Optional[np.ndarray] = None,
        leaf_labels: Optional[Sequence[str]] = None,
    ) -> "PhyloTree":
        """Return a copy with some arrays replaced."""

        return PhyloTree(
            parent=self.parent if parent is None else parent,
            children=self.children if children is None else children,
            ages=self.ages if ages is None else ages,
            leaf_labels=self.leaf_labels if leaf_labels is None else tuple(leaf_labels),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhyloTree):
            return NotImplemented
        return (
            self.leaf_labels == other.leaf_labels
            and np.array_equal(self.parent, other.parent)
            and np.array_equal(self.children, other.children)
            and np.array_equal(self.ages, other.ages)
        )

    def __hash__(self) -> int:
        return hash((self.leaf_labels, self.parent.tobytes(), self.ages.tobytes()))

    def __repr__(self) -> str:
        return f"PhyloTree({to_newick(self)!r})" if validate(self) is None else "PhyloTree(<invalid>)"


# ---------------------------------------------------------------------------
# Validation


def validate(tree: PhyloTree) -> Optional[str]:
    """Return ``None`` when the tree is valid, otherwise the first violated invariant."""

    n_leaves = tree.n_leaves
    n_nodes = tree.n_nodes
    if n_leaves < 2 or n_nodes != 2 * n_leaves - 1:
        return "node count: expected 2V-1 nodes for V leaves"
    if tree.children.shape[0] != n_nodes or tree.ages.shape[0] != n_nodes:
        return "node count: array sizes disagree"
    if len(set(tree.leaf_labels)) != n_leaves:
        return "duplicate leaf label"
    roots = np.flatnonzero(tree.parent < 0)
    if roots.size != 1:
        return "single root: found %d roots" % roots.size
    root = int(roots[0])
    if root < n_leaves:
        return "single root: root is a leaf"
    for node in range(n_nodes):
        kids = [int(c) for c in tree.children[node] if c >= 0]
        if node < n_leaves:
            if kids:
                return f"leaf {tree.leaf_labels[node]} has children"
        elif len(kids) != 2:
            return f"non-binary node {node} with {len(kids)} children"
        for kid in kids:
            if kid >= n_nodes or int(tree.parent[kid]) != node:
                return f"parent/children tables disagree at node {node}"
    if not np.isfinite(tree.ages).all():
        return "non-finite age"
    if tree.ages[root] != 0.0:
        return "root age != 0"
    for leaf in range(n_leaves):
        if tree.ages[leaf] != 1.0:
            return f"leaf age != 1 at {tree.leaf_labels[leaf]}"
    for node in range(n_nodes):
        p = int(tree.parent[node])
        if p >= 0 and not tree.ages[p] < tree.ages[node]:
            return f"non-positive branch above node {node}"
    # reachability: every node hangs from the root
    seen = {root}
    stack = [root]
    while stack:
        node = stack.pop()
        for kid in tree.children[node]:
            if kid >= 0 and int(kid) not in seen:
                seen.add(int(kid))
                stack.append(int(kid))
    if len(seen) != n_nodes:
        return "node count: nodes unreachable from the root"
    return None


def check(tree: PhyloTree) -> PhyloTree:
    """Raise :class:`InvalidTreeError` unless ``tree`` is valid; return it otherwise."""

    violation = validate(tree)
    if violation is not None:
        raise InvalidTreeError(violation)
    return tree


# ---------------------------------------------------------------------------
# Traversals and derived quantities


def postorder(tree: PhyloTree, start: Optional[int] = None) -> list[int]:
    """Children before parents, starting at ``start`` (root by default)."""

    order: list[int] = []
    stack = [tree.root if start is None else start]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(int(c) for c in tree.children[node] if c >= 0)
    order.reverse()
    return order


def preorder(tree: PhyloTree, start: Optional[int] = None) -> list[int]:
    order: list[int] = []
    stack = [tree.root if start is None else start]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(int(c) for c in reversed(tree.children[node]) if c >= 0)
    return order


def descendants(tree: PhyloTree, node: int) -> set[int]:
    """All nodes of the subtree rooted at ``node`` (including it)."""

    return set(postorder(tree, node))


def is_ancestor(tree: PhyloTree, ancestor: int, node: int) -> bool:
    current = int(tree.parent[node])
    while current >= 0:
        if current == ancestor:
            return True
        current = int(tree.parent[current])
    return False


def leaf_indices_below(tree: PhyloTree) -> dict[int, list[int]]:
    """Map every node to the leaf indices of its clade."""

    below: dict[int, list[int]] = {}
    for node in postorder(tree):
        if tree.is_leaf(node):
            below[node] = [node]
        else:
            left, right = (int(c) for c in tree.children[node])
            below[node] = below[left] + below[right]
    return below


def clades(tree: PhyloTree) -> dict[int, Split]:
    """Map every node to the set of leaf labels below it."""

    labels = tree.leaf_labels
    return {node: frozenset(labels[i] for i in leaves) for node, leaves in leaf_indices_below(tree).items()}


def leaf_order(tree: PhyloTree) -> list[str]:
    """Leaf labels in left-to-right (child-order) traversal."""

    return [tree.leaf_labels[n] for n in preorder(tree) if tree.is_leaf(n)]


def branch_lengths(tree: PhyloTree) -> np.ndarray:
    """Length of the edge above each node (0 at the root)."""

    lengths = np.zeros(tree.n_nodes)
    mask = tree.parent >= 0
    lengths[mask] = tree.ages[mask] - tree.ages[tree.parent[mask]]
    return lengths


def total_length(tree: PhyloTree) -> float:
    return float(branch_lengths(tree).sum())


def correlation_matrix(tree: PhyloTree, labels: Optional[Sequence[str]] = None) -> np.ndarray:
    """Matrix of MRCA ages, rows ordered by ``labels`` (leaf index order by default)."""

    check(tree)
    n = tree.n_leaves
    sigma = np.zeros((n, n))
    below = leaf_indices_below(tree)
    for node in range(n, tree.n_nodes):
        left, right = (int(c) for c in tree.children[node])
        rows, cols = below[left], below[right]
        age = tree.ages[node]
        sigma[np.ix_(rows, cols)] = age
        sigma[np.ix_(cols, rows)] = age
    np.fill_diagonal(sigma, 1.0)
    if labels is None:
        return sigma
    if set(labels) != set(tree.leaf_labels) or len(labels) != n:
        raise LeafSetMismatchError("labels do not match the tree leaves")
    index = {label: i for i, label in enumerate(tree.leaf_labels)}
    order = [index[label] for label in labels]
    return sigma[np.ix_(order, order)]


# ---------------------------------------------------------------------------
# Yule prior


def yule_log_density(tree: PhyloTree, b: float) -> float:
    """Unnormalized pure-birth log density ``(V-2) log b - b L``."""

    if not b > 0:
        raise ValueError(f"Yule birth rate must be positive, got {b}")
    return (tree.n_leaves - 2) * math.log(b) - b * total_length(tree)


def sample_yule_tree(
    n_leaves: int,
    b: float,
    rng: np.random.Generator,
    labels: Optional[Sequence[str]] = None,
) -> PhyloTree:
    """Simulate a pure-birth tree from two lineages and rescale it to height 1."""

    if n_leaves < 2:
        raise ValueError("a tree needs at least 2 leaves")
    YuleParams(b)
    if labels is None:
        labels = [f"v{i + 1}" for i in range(n_leaves)]
    if len(labels) != n_leaves or len(set(labels)) != n_leaves:
        raise ValueError("labels must be n_leaves distinct strings")

    # provisional ids: internal nodes in creation order, lineages point at their parent
    internal_parent = [-1]
    internal_age = [0.0]
    lineages = [0, 0]
    time = 0.0
    while len(lineages) < n_leaves:
        time += rng.exponential(1.0 / (b * len(lineages)))
        chosen = int(rng.integers(len(lineages)))
        internal_parent.append(lineages[chosen])
        internal_age.append(time)
        new_node = len(internal_age) - 1
        lineages[chosen] = new_node
        lineages.append(new_node)
    height = time + rng.exponential(1.0 / (b * len(lineages)))

    n_nodes = 2 * n_leaves - 1
    parent = np.full(n_nodes, -1, dtype=np.int64)
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    ages = np.ones(n_nodes)
    fill = np.zeros(n_nodes, dtype=np.int64)

    def attach(child: int, internal: int) -> None:
        node = n_leaves + internal
        parent[child] = node
        children[node, fill[node]] = child
        fill[node] += 1

    for internal, (p, age) in enumerate(zip(internal_parent, internal_age)):
        ages[n_leaves + internal] = age / height
        if p >= 0:
            attach(n_leaves + internal, p)
    for leaf, p in enumerate(lineages):
        attach(leaf, p)
    shuffled = [labels[i] for i in rng.permutation(n_leaves)]
    return check(PhyloTree(parent=parent, children=children, ages=ages, leaf_labels=shuffled))


# ---------------------------------------------------------------------------
# Splits and Robinson-Foulds


def splits(tree: PhyloTree) -> set[Split]:
    """One clade per non-root internal node."""

    root = tree.root
    return {clade for node, clade in clades(tree).items() if node >= tree.n_leaves and node != root}


def split_distance(first: Iterable[Split], second: Iterable[Split], n_leaves: int, normalized: bool = False) -> float:
    """Symmetric-difference size of two split families over ``n_leaves`` leaves."""

    raw = len(set(first) ^ set(second))
    if not normalized:
        return float(raw)
    denominator = 2 * (n_leaves - 2)
    return raw / denominator if denominator > 0 else 0.0


def rf_distance(first: PhyloTree, second: PhyloTree, normalized: bool = False) -> float:
    """Robinson-Foulds distance on clades; normalized form lies in [0, 1]."""

    if first.label_set != second.label_set:
        raise LeafSetMismatchError("trees have different leaf sets")
    return split_distance(splits(first), splits(second), first.n_leaves, normalized)


# ---------------------------------------------------------------------------
# Newick (read and written through dendropy)

_NEWICK_READ_OPTIONS = {
    "preserve_underscores": True,
    "case_sensitive_taxon_labels": True,
    "rooting": "force-rooted",
}


def format_float(value: float) -> str:
    return repr(float(f"{value:.{NEWICK_DIGITS}g}"))


def taxon_namespace(labels: Iterable[str] = ()) -> dendropy.TaxonNamespace:
    """Case-sensitive namespace, so ``a`` and ``A`` stay distinct leaves."""

    return dendropy.TaxonNamespace(list(labels), is_case_sensitive=True)


def to_dendropy(tree: PhyloTree, namespace: Optional[dendropy.TaxonNamespace] = None) -> dendropy.Tree:
    """Rooted dendropy copy with the same child order; ``preorder_node_iter`` matches :func:`preorder`."""

    if namespace is None:
        namespace = taxon_namespace(tree.leaf_labels)
    lengths = branch_lengths(tree)
    items: dict[int, dendropy.Node] = {}
    for node in preorder(tree):
        if tree.is_leaf(node):
            item = dendropy.Node(taxon=namespace.require_taxon(label=tree.leaf_labels[node]))
        else:
            item = dendropy.Node()
        p = int(tree.parent[node])
        if p >= 0:
            item.edge.length = float(lengths[node])
            items[p].add_child(item)
        items[node] = item
    result = dendropy.Tree(seed_node=items[tree.root], taxon_namespace=namespace)
    result.is_rooted = True
    return result


def _edge_length_label(edge: dendropy.Edge) -> Optional[str]:
    return None if edge.length is None else format_float(edge.length)


def newick_string(tree: dendropy.Tree, annotations: bool = False) -> str:
    """One-line Newick: quoted labels where needed, 12 significant digits, no root length."""

    text = tree.as_string(
        schema="newick",
        suppress_rooting=True,
        preserve_spaces=True,
        suppress_annotations=not annotations,
        edge_label_compose_fn=_edge_length_label,
    )
    return text.strip()


def to_newick(tree: PhyloTree) -> str:
    return newick_string(to_dendropy(tree))


def _byte_offset(text: str, line: Optional[int], column: Optional[int]) -> int:
    """Byte position of a 1-based line/column reported by the reader (end of text when unknown)."""

    if not line or column is None:
        return len(text.encode("utf-8"))
    lines = text.splitlines(keepends=True) or [""]
    line = min(line, len(lines))
    prefix = "".join(lines[: line - 1]) + lines[line - 1][: max(int(column) - 1, 0)]
    return len(prefix.encode("utf-8"))


def _label_offset(text: str, label: str) -> int:
    position = text.find(label) if label else -1
    return len(text[:position].encode("utf-8")) if position >= 0 else 0


def from_newick(text: str, expected_leaves: Optional[Iterable[str]] = None) -> PhyloTree:
    """Parse a binary ultrametric Newick tree of height 1."""

    body = text.rstrip()
    if not body.endswith(";"):
        raise NewickParseError("expected ';'", len(body.encode("utf-8")))
    try:
        trees = dendropy.TreeList.get(
            data=body, schema="newick", taxon_namespace=taxon_namespace(), **_NEWICK_READ_OPTIONS
        )
    except (DataError, ValueError) as exc:
        message = getattr(exc, "message", None) or str(exc)
        offset = _byte_offset(body, getattr(exc, "line_num", None), getattr(exc, "col_num", None))
        raise NewickParseError(str(message), offset) from exc
    if len(trees) != 1:
        raise NewickParseError(f"expected a single tree, found {len(trees)}", 0)
    return from_dendropy(trees[0], expected_leaves, text=body)


def from_dendropy(
    tree: dendropy.Tree,
    expected_leaves: Optional[Iterable[str]] = None,
    text: str = "",
) -> PhyloTree:
    """Node table of a dendropy tree; raises :class:`NewickParseError` on any broken invariant."""

    leaves: list[dendropy.Node] = []
    internals: list[dendropy.Node] = []
    for item in tree.preorder_node_iter():
        kids = item.child_nodes()
        if not kids:
            leaves.append(item)
        elif len(kids) != 2:
            raise NewickParseError(f"non-binary node with {len(kids)} children", 0)
        else:
            internals.append(item)
    labels = [leaf.taxon.label if leaf.taxon is not None else "" for leaf in leaves]
    if not all(labels):
        raise NewickParseError("missing leaf label", 0)
    if len(set(labels)) != len(labels):
        duplicate = next(label for label in labels if labels.count(label) > 1)
        raise NewickParseError(f"duplicate leaf label {duplicate!r}", _label_offset(text, duplicate))
    if expected_leaves is not None and set(labels) != set(expected_leaves):
        raise LeafSetMismatchError("Newick leaves do not match the expected label set")
    n_leaves = len(leaves)
    if n_leaves < 2:
        raise NewickParseError("a tree needs at least 2 leaves", 0)

    index = {id(item): i for i, item in enumerate(leaves)}
    index.update({id(item): n_leaves + i for i, item in enumerate(internals)})
    n_nodes = n_leaves + len(internals)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    ages = np.zeros(n_nodes)
    for item in internals:  # preorder: parents are placed before their children
        me = index[id(item)]
        for slot, kid in enumerate(item.child_nodes()):
            k = index[id(kid)]
            length = kid.edge.length
            if length is None:
                label = kid.taxon.label if kid.taxon is not None else ""
                raise NewickParseError("missing branch length", _label_offset(text, label))
            parent[k] = me
            children[me, slot] = k
            ages[k] = ages[me] + float(length)
    for i, label in enumerate(labels):
        if abs(ages[i] - 1.0) > ULTRAMETRIC_TOLERANCE:
            raise UltrametricityError(
                f"root-to-leaf length of {label} is {ages[i]!r}, expected 1", _label_offset(text, label)
            )
    ages[:n_leaves] = 1.0
    result = PhyloTree(parent=parent, children=children, ages=ages, leaf_labels=labels)
    violation = validate(result)
    if violation is not None:
        raise NewickParseError(violation, 0)
    return result


def read_newick_lines(text: str, expected_leaves: Optional[Iterable[str]] = None) -> list[PhyloTree]:
    """Parse a multi-tree file holding one Newick string per non-blank line."""

    return [from_newick(line, expected_leaves) for line in text.splitlines() if line.strip()]
