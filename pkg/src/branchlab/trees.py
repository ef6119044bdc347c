"""Rooted unordered trees, trees with edge-lengths and reduced trees.

:class:`Tree` values are hash-consed: two isomorphic trees built anywhere in
a process are the same object, so equality is identity and hashing is free.
Every tree carries its children in canonical order, largest first, for the
total order described in :func:`compare`.

The order is fixed because :mod:`branchlab.polya` ranks trees with it:

1. smaller trees come first;
2. among trees of equal size, the root split lambda(t) decides, taking the
   partitions in reverse lexicographic order, so (n-1) comes before
   (n-2, 1) and so on;
3. within equal size and lambda, children (largest first) are compared
   one by one, and the first differing pair decides.
"""

from __future__ import annotations

import functools
import math
import weakref
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .partitions import IntPartition, SetPartition, iter_partitions

__all__ = [
    "Tree",
    "LEAF",
    "compare",
    "canonicalize",
    "enumerate_trees",
    "ENUMERATION_CAP",
    "TreeStats",
    "tree_stats",
    "random_point_depth",
    "ghost_leaf_transform",
    "path_tree",
    "EdgeTree",
    "ChainPath",
    "reduced_edge_tree",
]

# largest n accepted by enumerate_trees (T_14 = 32973 trees for m = inf)
ENUMERATION_CAP = 14


class Tree:
    """An unordered rooted tree in canonical form. Build with :meth:`node`."""

    __slots__ = ("kids", "size", "height", "n_leaves", "lam", "_uid", "__weakref__")

    _table: "weakref.WeakValueDictionary[tuple, Tree]" = weakref.WeakValueDictionary()
    _next_uid = 0

    def __init__(self):  # pragma: no cover - guarded
        raise TypeError("use Tree.node(children) or canonicalize()")

    @classmethod
    def node(cls, children: Iterable["Tree"] = ()) -> "Tree":
        kids = list(children)
        sig = tuple(sorted(k._uid for k in kids))
        hit = cls._table.get(sig)
        if hit is not None:
            return hit
        t = object.__new__(cls)
        kids.sort(key=_ORDER_KEY, reverse=True)
        t.kids = tuple(kids)
        t.size = 1 + sum(k.size for k in kids)
        t.height = 1 + max(k.height for k in kids) if kids else 0
        t.n_leaves = sum(k.n_leaves for k in kids) if kids else 1
        t.lam = tuple(k.size for k in t.kids)
        t._uid = cls._next_uid
        cls._next_uid += 1
        cls._table[sig] = t
        return t

    @property
    def is_leaf(self) -> bool:
        return not self.kids

    def __len__(self):
        return self.size

    def __lt__(self, other: "Tree"):
        return compare(self, other) < 0

    def __le__(self, other: "Tree"):
        return compare(self, other) <= 0

    def __gt__(self, other: "Tree"):
        return compare(self, other) > 0

    def __ge__(self, other: "Tree"):
        return compare(self, other) >= 0

    def __reduce__(self):
        return (_from_parents, (tuple(self.to_parents()),))

    def __repr__(self):
        if self.size > 40:
            return f"Tree(size={self.size}, height={self.height})"
        return "Tree(" + self.to_brackets() + ")"

    def to_brackets(self) -> str:
        """Angle-bracket notation, e.g. <<•,•>,•>."""
        if not self.kids:
            return "•"
        return "<" + ",".join(k.to_brackets() for k in self.kids) + ">"

    def to_nested(self) -> list:
        """Nested lists of children in canonical order (leaf = [])."""
        memo: dict[int, list] = {}
        for t in self.postorder_distinct():
            memo[t._uid] = [memo[k._uid] for k in t.kids]
        return memo[self._uid]

    def postorder_distinct(self) -> list["Tree"]:
        """Distinct subtrees, children before parents."""
        seen: set[int] = set()
        out: list[Tree] = []
        stack: list[tuple[Tree, bool]] = [(self, False)]
        while stack:
            t, done = stack.pop()
            if done:
                out.append(t)
                continue
            if t._uid in seen:
                continue
            seen.add(t._uid)
            stack.append((t, True))
            stack.extend((k, False) for k in t.kids if k._uid not in seen)
        return out

    def preorder(self) -> Iterator["Tree"]:
        """All vertices (as subtrees) in preorder of the canonical form."""
        stack = [self]
        while stack:
            t = stack.pop()
            yield t
            stack.extend(reversed(t.kids))

    def to_parents(self) -> list[int]:
        """Parent index of every vertex in preorder; the root has -1."""
        out: list[int] = []
        stack: list[tuple[Tree, int]] = [(self, -1)]
        while stack:
            t, parent = stack.pop()
            me = len(out)
            out.append(parent)
            stack.extend((k, me) for k in reversed(t.kids))
        return out

    def depths(self, measure: str = "vertices") -> np.ndarray:
        """Depth of every vertex (or every leaf) in preorder."""
        out = []
        stack = [(self, 0)]
        while stack:
            t, d = stack.pop()
            if measure == "vertices" or not t.kids:
                out.append(d)
            stack.extend((k, d + 1) for k in t.kids)
        return np.asarray(out, dtype=np.int64)

    def max_children(self) -> int:
        return max(len(t.kids) for t in self.postorder_distinct())

    def root_split(self) -> IntPartition | None:
        """lambda(t): sizes of the root subtrees, or None for the one-vertex tree."""
        return IntPartition(self.lam) if self.kids else None


def _from_parents(parents: Sequence[int]) -> Tree:
    children: list[list[int]] = [[] for _ in parents]
    for v, p in enumerate(parents):
        if p >= 0:
            children[p].append(v)
    built: list[Tree | None] = [None] * len(parents)
    # preorder: parents precede children, so reverse order builds bottom-up
    for v in range(len(parents) - 1, -1, -1):
        built[v] = Tree.node(built[c] for c in children[v])
    return built[0]


Tree.from_parents = staticmethod(_from_parents)


def compare(a: Tree, b: Tree) -> int:
    """Three-way comparison in the canonical total order (-1, 0, 1)."""
    while True:
        if a is b:
            return 0
        if a.size != b.size:
            return -1 if a.size < b.size else 1
        if a.lam != b.lam:
            # reverse lexicographic: the larger split tuple is the smaller tree
            return -1 if a.lam > b.lam else 1
        for x, y in zip(a.kids, b.kids):
            if x is not y:
                a, b = x, y
                break


_ORDER_KEY = functools.cmp_to_key(compare)

LEAF = Tree.node(())


def canonicalize(structure) -> Tree:
    """Canonical tree from nested child sequences (a leaf is an empty sequence).

    Also accepts a :class:`Tree`, which is returned unchanged.
    """
    if isinstance(structure, Tree):
        return structure
    if isinstance(structure, str):
        raise ValueError("a tree structure must be nested sequences, not a string")
    # iterative post-order so deep paths do not hit the recursion limit
    result: dict[int, Tree] = {}
    stack: list[tuple[object, bool]] = [(structure, False)]
    while stack:
        obj, done = stack.pop()
        if isinstance(obj, Tree):
            result[id(obj)] = obj
            continue
        try:
            kids = list(obj)
        except TypeError:
            raise ValueError(f"malformed tree node: {obj!r}") from None
        if done:
            result[id(obj)] = Tree.node(result[id(k)] for k in kids)
        else:
            stack.append((obj, True))
            for k in kids:
                if not isinstance(k, (list, tuple, Tree)):
                    raise ValueError(f"malformed tree node: {k!r}")
                stack.append((k, False))
    return result[id(structure)]


def path_tree(n: int) -> Tree:
    """The path with n vertices."""
    t = LEAF
    for _ in range(n - 1):
        t = Tree.node((t,))
    return t


def _multisets_lex(universe: int, k: int) -> Iterator[tuple[int, ...]]:
    """Non-increasing index tuples of length k, in lexicographic order."""
    if k == 0:
        yield ()
        return

    def rec(cap, left):
        if left == 0:
            yield ()
            return
        for i in range(cap + 1):
            for tail in rec(i, left - 1):
                yield (i,) + tail

    yield from rec(universe - 1, k)


def enumerate_trees(n: int, m: int | float | None = None) -> list[Tree]:
    """All trees with n vertices and at most m children per vertex, in canonical order.

    ``m`` may be None or ``math.inf`` for no bound. Capped at
    :data:`ENUMERATION_CAP` vertices.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > ENUMERATION_CAP:
        raise ValueError(f"enumerate_trees is capped at n = {ENUMERATION_CAP}")
    mm = None if m is None or m == math.inf else int(m)
    if mm is not None and mm < 1:
        raise ValueError("m must be at least 1")
    by_size: list[list[Tree]] = [[], [LEAF]]
    for size in range(2, n + 1):
        out: list[Tree] = []
        for lam in iter_partitions(size - 1, max_parts=mm):
            groups = sorted(Counter(lam).items(), reverse=True)
            choices = [list(_multisets_lex(len(by_size[j]), k)) for j, k in groups]
            for combo in _product(choices):
                kids = [by_size[j][i] for (j, _), idx in zip(groups, combo) for i in idx]
                out.append(Tree.node(kids))
        by_size.append(out)
    return by_size[n]


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


@dataclass(frozen=True)
class TreeStats:
    height: int
    n_vertices: int
    n_leaves: int
    root_split: IntPartition | None
    degree_histogram: dict[int, int]

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "n_vertices": self.n_vertices,
            "n_leaves": self.n_leaves,
            "root_split": self.root_split.to_json() if self.root_split else None,
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
        }


def tree_stats(t: Tree) -> TreeStats:
    """Height, counts, root split and children-count histogram.

    ``root_split`` is None for the one-vertex tree, where lambda is undefined.
    """
    hist: Counter = Counter()
    for v in t.preorder():
        hist[len(v.kids)] += 1
    return TreeStats(t.height, t.size, t.n_leaves, t.root_split(), dict(hist))


def random_point_depth(t: Tree, measure: str, rng: np.random.Generator) -> int:
    """Depth of a uniform vertex (``"vertices"``) or uniform leaf (``"leaves"``).

    Walks down from the root, so each draw costs O(height * degree).
    """
    if measure not in ("vertices", "leaves"):
        raise ValueError("measure must be 'vertices' or 'leaves'")
    depth = 0
    v = t
    while v.kids:
        if measure == "vertices":
            u = rng.integers(v.size)
            if u == 0:
                return depth
            u -= 1
            for k in v.kids:
                if u < k.size:
                    v = k
                    break
                u -= k.size
        else:
            u = rng.integers(v.n_leaves)
            for k in v.kids:
                if u < k.n_leaves:
                    v = k
                    break
                u -= k.n_leaves
        depth += 1
    return depth


def ghost_leaf_transform(t: Tree) -> Tree:
    """Give every internal vertex one extra leaf child; the result has #t leaves."""
    memo: dict[int, Tree] = {}
    for s in t.postorder_distinct():
        if s.kids:
            memo[s._uid] = Tree.node([memo[k._uid] for k in s.kids] + [LEAF])
        else:
            memo[s._uid] = s
    return memo[t._uid]


# ---------------------------------------------------------------------------
# trees with edge-lengths


@dataclass(frozen=True, eq=False)
class EdgeTree:
    """A tree with a length on the edge above every vertex.

    The root's own length is the planted edge. Leaves may carry integer labels.
    Equality of metric trees is tested with :meth:`metric_equal`.
    """

    length: float
    children: tuple["EdgeTree", ...] = ()
    label: int | None = None

    def __post_init__(self):
        if not self.length >= 0:
            raise ValueError(f"edge lengths must be nonnegative, got {self.length!r}")

    @classmethod
    def from_tree(cls, t: Tree, unit: float = 1.0) -> "EdgeTree":
        memo: dict[int, EdgeTree] = {}
        for s in t.postorder_distinct():
            memo[s._uid] = cls(unit, tuple(memo[k._uid] for k in s.kids))
        return memo[t._uid]

    @property
    def shape(self) -> Tree:
        """The underlying discrete tree (lengths and labels forgotten)."""
        return _fold(self, lambda node, kids: Tree.node(kids))

    def preorder(self) -> Iterator["EdgeTree"]:
        stack = [self]
        while stack:
            v = stack.pop()
            yield v
            stack.extend(reversed(v._sorted_children()))

    def _sorted_children(self) -> tuple["EdgeTree", ...]:
        return tuple(sorted(self.children, key=lambda c: (_ORDER_KEY(c.shape), _metric_key(c, False)),
                            reverse=True))

    @property
    def lengths(self) -> list[float]:
        """Edge lengths in preorder of the canonical form."""
        return [v.length for v in self.preorder()]

    @property
    def leaf_labels(self) -> list[int | None]:
        return [v.label for v in self.preorder() if not v.children]

    def height(self) -> float:
        """Largest root-to-vertex distance, counting the planted edge."""
        best = 0.0
        stack = [(self, self.length)]
        while stack:
            v, d = stack.pop()
            best = max(best, d)
            stack.extend((c, d + c.length) for c in v.children)
        return best

    def leaf_heights(self) -> dict:
        """Distance from the root to every leaf, keyed by label (or preorder index)."""
        out = {}
        stack = [(self, self.length)]
        i = 0
        while stack:
            v, d = stack.pop()
            if not v.children:
                out[v.label if v.label is not None else i] = d
                i += 1
            stack.extend((c, d + c.length) for c in v.children)
        return out

    def n_leaves(self) -> int:
        return sum(1 for v in self.preorder() if not v.children)

    def contracted(self) -> "EdgeTree":
        """Same metric tree with unary vertices and zero-length internal edges removed."""
        return _contract(self)

    def spanned(self, labels: Iterable[int]) -> "EdgeTree":
        """Subtree spanned by the root and the leaves whose labels are given."""
        keep = set(labels)
        out = _prune(self, keep)
        if out is None:
            raise ValueError("no leaf carries the requested labels")
        return out.contracted()

    def metric_equal(self, other: "EdgeTree", labels: bool = True, tol: float = 1e-9) -> bool:
        """Equality as rooted metric trees (optionally respecting leaf labels)."""
        digits = max(0, int(round(-math.log10(tol))))
        return (_metric_key(self.contracted(), labels, digits)
                == _metric_key(other.contracted(), labels, digits))

    def to_json(self) -> dict:
        return {"tree": self.shape.to_nested(), "lengths": self.lengths}


def _fold(root: EdgeTree, combine):
    memo: dict[int, object] = {}
    stack: list[tuple[EdgeTree, bool]] = [(root, False)]
    while stack:
        v, done = stack.pop()
        if done:
            memo[id(v)] = combine(v, [memo[id(c)] for c in v.children])
        else:
            stack.append((v, True))
            stack.extend((c, False) for c in v.children)
    return memo[id(root)]


def _contract(v: EdgeTree) -> EdgeTree:
    length = v.length
    # a unary chain collapses into its single child
    while len(v.children) == 1:
        v = v.children[0]
        length += v.length
    kids: list[EdgeTree] = []
    for c in v.children:
        cc = _contract(c)
        if cc.children and cc.length == 0:
            kids.extend(cc.children)
        else:
            kids.append(cc)
    if len(kids) == 1:
        only = kids[0]
        return EdgeTree(length + only.length, only.children, only.label)
    return EdgeTree(length, tuple(kids), v.label if not kids else None)


def _prune(v: EdgeTree, keep: set) -> EdgeTree | None:
    if not v.children:
        return v if v.label in keep else None
    kids = tuple(k for k in (_prune(c, keep) for c in v.children) if k is not None)
    if not kids:
        return None
    return EdgeTree(v.length, kids, None)


def _metric_key(v: EdgeTree, labels: bool, digits: int = 9):
    def combine(node, kids):
        return (round(node.length, digits), node.label if labels else None, tuple(sorted(kids, key=repr)))

    return _fold(v, combine)


# ---------------------------------------------------------------------------
# partition paths and reduced trees


@dataclass(frozen=True)
class ChainPath:
    """Refining sequence of set partitions indexed by t = 0, 1, 2, ...

    The last state must be all singletons; times past the end repeat it.
    """

    states: tuple[SetPartition, ...]

    def __post_init__(self):
        states = tuple(self.states)
        if not states:
            raise ValueError("a chain path needs at least one state")
        ground = states[0].ground
        for a, b in zip(states, states[1:]):
            if b.ground != ground:
                raise ValueError("all states must share the same ground set")
            if not b.refines(a):
                raise ValueError("a chain path must be non-decreasing in refinement")
        if not states[-1].is_finest():
            raise ValueError("a chain path must end at the all-singletons partition")
        object.__setattr__(self, "states", states)

    @property
    def ground(self) -> frozenset[int]:
        return self.states[0].ground

    def at(self, t: int) -> SetPartition:
        return self.states[min(t, len(self.states) - 1)]

    def __len__(self):
        return len(self.states)

    def to_json(self) -> list:
        return [s.to_json() for s in self.states]


def _first_split_time(path: ChainPath, start: int, block: frozenset) -> int:
    t = start
    while True:
        state = path.at(t)
        owners = {tuple(state.block_of(i)) for i in block}
        if len(owners) > 1 or (len(block) == 1 and len(next(iter(owners))) == 1):
            return t - start
        t += 1


def reduced_edge_tree(path: ChainPath, labels: Iterable[int]) -> EdgeTree:
    """Reduced tree of ``path`` spanned by ``labels``.

    A group of two or more labels sits on an edge whose length is the time
    until the path separates them. A single label i becomes a leaf whose
    edge length is one more than the time until {i} is a singleton block.
    The extra unit is the edge of the leaf vertex itself, so with
    B = ground set the result is metrically the genealogy tree with unit
    lengths, planted edge included.
    """
    B = frozenset(labels)
    if not B:
        raise ValueError("the label set must be nonempty")
    if not B <= path.ground:
        raise ValueError("labels are not contained in the ground set of the path")

    def build(start: int, block: frozenset) -> EdgeTree:
        d = _first_split_time(path, start, block)
        if len(block) == 1:
            return EdgeTree(float(d + 1), (), next(iter(block)))
        state = path.at(start + d)
        parts = [frozenset(b) & block for b in state.blocks]
        return EdgeTree(float(d), tuple(build(start + d, p) for p in parts if p))

    return build(0, B)
