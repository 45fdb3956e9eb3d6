"""Perfect binary tree addressing and pruned-subtree enumeration.

Nodes of a perfect binary tree of depth ``d_max`` are packed level-order
into integers: the root is 0 and node ``i`` has children ``2i+1`` (left)
and ``2i+2`` (right).  The ``(depth, offset)`` pair used in the model
description maps to ``2**depth - 1 + (offset - 1)`` with offsets counted
from 1, left to right.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

MAX_ENUMERATION_DEPTH = 4


@dataclass(frozen=True)
class TreeIndex:
    """Index arithmetic for a perfect binary tree of depth ``d_max``."""

    d_max: int

    def __post_init__(self):
        if int(self.d_max) != self.d_max or self.d_max < 1:
            raise ValueError(f"d_max must be an integer >= 1, got {self.d_max!r}")

    @property
    def n_nodes(self) -> int:
        return 2 ** (self.d_max + 1) - 1

    @property
    def n_inner(self) -> int:
        return 2 ** self.d_max - 1

    @property
    def n_leaves(self) -> int:
        return 2 ** self.d_max

    def node(self, depth: int, offset: int) -> int:
        if not 0 <= depth <= self.d_max or not 1 <= offset <= 2 ** depth:
            raise ValueError(f"no node at depth {depth}, offset {offset}")
        return 2 ** depth - 1 + offset - 1

    def position(self, node: int) -> tuple[int, int]:
        """Return ``(depth, offset)`` of a packed node index."""
        self._check(node)
        depth = int(node + 1).bit_length() - 1
        return depth, node - (2 ** depth - 1) + 1

    def depth(self, node: int) -> int:
        return self.position(node)[0]

    def is_inner(self, node: int) -> bool:
        self._check(node)
        return node < self.n_inner

    def children(self, node: int) -> tuple[int, int]:
        self._check(node)
        if node >= self.n_inner:
            raise ValueError(
                f"node {self.position(node)} is at maximum depth and has no children"
            )
        return 2 * node + 1, 2 * node + 2

    def parent(self, node: int) -> int:
        self._check(node)
        if node == 0:
            raise ValueError("the root has no parent")
        return (node - 1) // 2

    def path_to(self, node: int) -> list[tuple[int, int]]:
        """Edges ``(ancestor, child)`` from the root down to ``node``."""
        self._check(node)
        edges = []
        while node != 0:
            up = (node - 1) // 2
            edges.append((up, node))
            node = up
        return edges[::-1]

    def is_ancestor(self, a: int, b: int) -> bool:
        """True if ``a`` is an ancestor of ``b`` or equal to it."""
        self._check(a)
        self._check(b)
        while b > a:
            b = (b - 1) // 2
        return a == b

    def level(self, depth: int) -> range:
        """Packed indices of all nodes at ``depth``, left to right."""
        return range(2 ** depth - 1, 2 ** (depth + 1) - 1)

    def depths(self) -> np.ndarray:
        """Depth of every node, as an array indexed by node."""
        return np.concatenate(
            [np.full(2 ** d, d, dtype=int) for d in range(self.d_max + 1)]
        )

    def _check(self, node):
        if not 0 <= node < self.n_nodes:
            raise IndexError(f"node index {node} out of range for d_max={self.d_max}")


@dataclass(frozen=True)
class PrunedTree:
    """A regular subtree of the perfect tree, given by its split flags.

    ``split[i]`` is True when inner node ``i`` of the perfect tree is an
    internal node of the pruned tree.
    """

    d_max: int
    split: tuple[bool, ...]

    def __post_init__(self):
        index = TreeIndex(self.d_max)
        if len(self.split) != index.n_inner:
            raise ValueError("split flags must cover every inner node")
        for i in range(1, index.n_inner):
            if self.split[i] and not self.split[(i - 1) // 2]:
                raise ValueError(f"node {i} is split but its parent is not")

    def contains(self, node: int) -> bool:
        return node == 0 or self.split[(node - 1) // 2]

    def internal_nodes(self) -> list[int]:
        return [i for i, flag in enumerate(self.split) if flag]

    def leaves(self) -> list[int]:
        n_inner = len(self.split)
        return [
            i
            for i in range(2 * n_inner + 1)
            if self.contains(i) and (i >= n_inner or not self.split[i])
        ]

    @property
    def n_internal(self) -> int:
        return sum(self.split)

    @classmethod
    def root_only(cls, d_max: int) -> "PrunedTree":
        return cls(d_max, (False,) * TreeIndex(d_max).n_inner)


def _subtrees(node: int, n_inner: int) -> Iterator[frozenset]:
    # each yielded set holds the split nodes of one subtree rooted at node
    yield frozenset()
    if node >= n_inner:
        return
    left, right = 2 * node + 1, 2 * node + 2
    rights = list(_subtrees(right, n_inner))
    for lset in _subtrees(left, n_inner):
        for rset in rights:
            yield frozenset({node}) | lset | rset


def enumerate_pruned_trees(index: TreeIndex) -> list[PrunedTree]:
    """Every regular pruned subtree rooted at the root, each exactly once."""
    if index.d_max > MAX_ENUMERATION_DEPTH:
        raise ValueError(
            f"refusing to enumerate pruned trees for d_max={index.d_max}; "
            f"the limit is d_max <= {MAX_ENUMERATION_DEPTH}"
        )
    trees = []
    for splits in _subtrees(0, index.n_inner):
        flags = tuple(i in splits for i in range(index.n_inner))
        trees.append(PrunedTree(index.d_max, flags))
    return trees


def tree_log_prob(tree: PrunedTree, split_prob) -> float:
    """Log of the product-form tree probability under per-node split probabilities.

    ``split_prob`` holds one value per node; nodes at maximum depth must be 0.
    """
    g = np.asarray(split_prob, dtype=float)
    total = 0.0
    with np.errstate(divide="ignore"):
        for i in tree.internal_nodes():
            total += np.log(g[i])
        for i in tree.leaves():
            total += np.log1p(-g[i])
    return float(total)
