"""Top-down testing of hypotheses arranged in a tree.

Each parent hypothesis is the intersection of its children, so a node can
only be false when some leaf below it is false. A node becomes testable once
all of its ancestors are rejected, and it is tested at a level proportional
to the number of leaves below it.

Variants differ in the denominator:

============================  =========================================
``tree_basic``                ``L``, all leaves
``tree_improved``             unrejected leaves
``tree_improved_II``          ``L`` minus the rejected nodes that have
                              no rejected descendant
``tree_shaffer``              leaf pairs (symmetric binary trees only)
``tree_shaffer_improved``     leaf pairs not yet completely rejected
============================  =========================================
"""

from __future__ import annotations

import itertools
from typing import Mapping, Sequence

from ._bits import bits, popcount, to_mask
from .core import Schedule
from .logic import HypothesisUniverse, LogicalStructure


class HypothesisTree:
    """A forest of hypotheses given by labels and a child-to-parent map.

    Parameters
    ----------
    labels : sequence of str
    parent : mapping
        ``child -> parent``, by label or by integer id. Nodes without an
        entry are roots.

    Attributes
    ----------
    children : tuple of tuple of int
    leaves : int
        Bitmask of the leaf nodes.
    leaf_count : tuple of int
        Number of descendant leaves of every node (1 for a leaf).
    ancestors, offspring : tuple of int
        Bitmasks of the strict ancestors and strict descendants of each node.
    """

    def __init__(self, labels: Sequence[str], parent: Mapping):
        self.universe = HypothesisUniverse(tuple(labels))
        n = self.universe.count

        def ident(x):
            return int(x) if isinstance(x, int) else self.universe.index(x)

        par = [-1] * n
        for c, p in parent.items():
            c, p = ident(c), ident(p)
            if c == p:
                raise ValueError(f"node {self.universe.labels[c]!r} is its own parent")
            par[c] = p
        self.parent = tuple(par)
        kids: list[list[int]] = [[] for _ in range(n)]
        for c, p in enumerate(par):
            if p >= 0:
                kids[p].append(c)
        self.children = tuple(tuple(k) for k in kids)
        anc = [0] * n
        for h in range(n):
            seen, p = 0, par[h]
            while p >= 0:
                if seen >> p & 1 or p == h:
                    raise ValueError("parent map contains a cycle")
                seen |= 1 << p
                p = par[p]
            anc[h] = seen
        self.ancestors = tuple(anc)
        self.offspring = tuple(to_mask(j for j in range(n) if anc[j] >> h & 1) for h in range(n))
        self.leaves = to_mask(h for h in range(n) if not kids[h])
        self.leaf_count = tuple(popcount(self.offspring[h] & self.leaves) or 1 for h in range(n))
        self.roots = tuple(h for h in range(n) if par[h] < 0)

    @classmethod
    def perfect_binary(cls, levels: int, prefix: str = "H") -> "HypothesisTree":
        """Perfect binary tree with ``levels`` levels, labelled in breadth-first order."""
        if levels < 1:
            raise ValueError("need at least one level")
        n = (1 << levels) - 1
        labels = [f"{prefix}{i + 1}" for i in range(n)]
        return cls(labels, {i: (i - 1) // 2 for i in range(1, n)})

    @property
    def n(self) -> int:
        return self.universe.count

    @property
    def labels(self) -> tuple[str, ...]:
        return self.universe.labels

    @property
    def n_leaves(self) -> int:
        return popcount(self.leaves)

    def _shape(self, h):
        return tuple(sorted(self._shape(c) for c in self.children[h]))

    @property
    def is_symmetric_binary(self) -> bool:
        """One root with children, every node has 0 or 2 children, siblings isomorphic."""
        if len(self.roots) != 1 or not self.children[self.roots[0]]:
            return False
        for kids in self.children:
            if len(kids) not in (0, 2):
                return False
            if kids and self._shape(kids[0]) != self._shape(kids[1]):
                return False
        return True

    def depth(self, h: int) -> int:
        return popcount(self.ancestors[h])

    def induced_structure(self) -> LogicalStructure:
        """Atoms for every leaf truth assignment; internal nodes true iff all their leaves are."""
        leaves = list(bits(self.leaves))
        if len(leaves) > 20:
            raise ValueError(f"{len(leaves)} leaves; refusing to enumerate more than 2**20 atoms")
        below = [self.offspring[h] & self.leaves if self.children[h] else 1 << h for h in range(self.n)]
        atoms = []
        for pattern in itertools.product((0, 1), repeat=len(leaves)):
            true_leaves = to_mask(lf for lf, t in zip(leaves, pattern) if t)
            atoms.append(to_mask(h for h in range(self.n) if below[h] & ~true_leaves == 0))
        return LogicalStructure(self.universe, atoms)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "parent": {
                self.labels[c]: self.labels[p] for c, p in enumerate(self.parent) if p >= 0
            },
        }


class TreeSchedule(Schedule):
    """``alpha_H(R) = level * weight(H) / denominator(R)`` once all ancestors are rejected."""

    def __init__(self, tree: HypothesisTree):
        super().__init__(tree.n)
        self.tree = tree

    def weight(self, h: int) -> float:
        return float(self.tree.leaf_count[h])

    def denominator(self, rejected: int) -> float:
        raise NotImplementedError

    def _factor(self, h, rejected):
        if self.tree.ancestors[h] & ~rejected:
            return 0.0
        d = self.denominator(rejected)
        return None if d <= 0 else self.weight(h) / d

    def alpha(self, h, rejected, level, evidence=None):
        f = self._factor(h, rejected)
        return 1.0 if f is None else min(1.0, level * f)

    def inverse(self, h, rejected, p, evidence=None):
        f = self._factor(h, rejected)
        if f is None:
            return 0.0
        if f == 0:
            return 1.0
        return min(1.0, p / f)


class TreeBasic(TreeSchedule):
    name = "tree-basic"

    def denominator(self, rejected):
        return float(self.tree.n_leaves)


class TreeImproved(TreeSchedule):
    name = "tree-improved"

    def denominator(self, rejected):
        return float(popcount(self.tree.leaves & ~rejected))


class TreeImprovedII(TreeSchedule):
    name = "tree-improved-ii"

    def denominator(self, rejected):
        bottom = sum(1 for h in bits(rejected) if not self.tree.offspring[h] & rejected)
        return float(self.tree.n_leaves - bottom)


class TreeShaffer(TreeSchedule):
    """Leaf critical values doubled: ``level * P_H / P`` in leaf-pair units."""

    name = "tree-shaffer"

    def __init__(self, tree: HypothesisTree):
        if not tree.is_symmetric_binary:
            raise ValueError("the leaf-pair variants need a symmetric binary tree")
        super().__init__(tree)
        self.pairs = tuple(
            to_mask(kids)
            for kids in tree.children
            if kids and all(tree.leaves >> c & 1 for c in kids)
        )

    def weight(self, h):
        return 1.0 if self.tree.leaves >> h & 1 else self.tree.leaf_count[h] / 2

    def denominator(self, rejected):
        return float(len(self.pairs))


class TreeShafferImproved(TreeShaffer):
    name = "tree-shaffer-improved"

    def denominator(self, rejected):
        return float(sum(1 for pair in self.pairs if pair & ~rejected))


def tree_basic(tree: HypothesisTree) -> TreeBasic:
    return TreeBasic(tree)


def tree_improved(tree: HypothesisTree) -> TreeImproved:
    return TreeImproved(tree)


def tree_improved_II(tree: HypothesisTree) -> TreeImprovedII:
    return TreeImprovedII(tree)


def tree_shaffer(tree: HypothesisTree) -> TreeShaffer:
    return TreeShaffer(tree)


def tree_shaffer_improved(tree: HypothesisTree) -> TreeShafferImproved:
    return TreeShafferImproved(tree)
