"""Markov branching samplers, the labeled partition chain, and exact small-n laws."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable

import numpy as np

from .partitions import EMPTY, IntPartition, SetPartition, uniform_shape_partition
from .splitlaws import AliasTable, OffspringLaw, SplitLaw
from .trees import LEAF, ChainPath, EdgeTree, Tree

__all__ = [
    "sample_P",
    "sample_Q",
    "chain_step",
    "LabeledTree",
    "labeled_tree",
    "exact_Q_law",
    "exact_P_law",
    "EXACT_LAW_CAP",
    "alpha_theta_grow",
    "alpha_theta_root_splits",
    "gw_offspring_sequence",
    "gw_tree",
    "gw_heights",
    "gw_uniform_vertex_depths",
]

# largest n accepted by the exact tree laws unless a cap is passed
EXACT_LAW_CAP = 9


def _wrap(t: Tree, g: int) -> Tree:
    for _ in range(g):
        t = Tree.node((t,))
    return t


def _leaf_hold(q: SplitLaw, n: int, rng) -> int:
    """Length G of the string planted above a size-n vertex."""
    if n == 1:
        p_stop = q.pmf(1, EMPTY)
        if not p_stop > 0:
            raise ValueError("q_1(empty) = 0: the leaf string never ends")
        return 0 if p_stop >= 1.0 else int(rng.geometric(p_stop)) - 1
    stay = q.trivial_mass(n)
    if stay >= 1.0:
        raise ValueError(f"q_{n}(({n})) = 1 encountered")
    return 0 if stay <= 0.0 else int(rng.geometric(1.0 - stay)) - 1


def sample_P(q: SplitLaw, n: int, rng: np.random.Generator) -> Tree:
    """A tree with n leaves from the leaf-model law P^q_n."""
    if q.model != "leaf":
        raise ValueError("sample_P needs a leaf-model law")
    if n < 1:
        raise ValueError("n must be positive")
    built: dict[int, Tree] = {}
    order: list[tuple[int, int, list[int]]] = []
    pending = [(n, 0)]
    next_id = 1
    while pending:
        size, ident = pending.pop()
        g = _leaf_hold(q, size, rng)
        if size == 1:
            built[ident] = _wrap(LEAF, g)
            continue
        lam = q.sample_nontrivial(size, rng)
        kids = list(range(next_id, next_id + lam.p))
        next_id += lam.p
        pending.extend(zip(lam.parts, kids))
        order.append((ident, g, kids))
    for ident, g, kids in reversed(order):
        built[ident] = _wrap(Tree.node(built[c] for c in kids), g)
    return built[0]


def sample_Q(q: SplitLaw, n: int, rng: np.random.Generator) -> Tree:
    """A tree with n vertices from the vertex-model law Q^q_n."""
    if q.model != "vertex":
        raise ValueError("sample_Q needs a vertex-model law")
    if n < 1:
        raise ValueError("n must be positive")
    built: dict[int, Tree] = {}
    order: list[tuple[int, list[int]]] = []
    pending = [(n, 0)]
    next_id = 1
    while pending:
        size, ident = pending.pop()
        if size == 1:
            built[ident] = LEAF
            continue
        lam = q.sample(size - 1, rng)
        if lam.is_empty or lam.n != size - 1:
            raise ValueError(f"{q.name}: q_{size - 1} returned {lam!r}")
        kids = list(range(next_id, next_id + lam.p))
        next_id += lam.p
        pending.extend(zip(lam.parts, kids))
        order.append((ident, kids))
    for ident, kids in reversed(order):
        built[ident] = Tree.node(built[c] for c in kids)
    return built[0]


# ---------------------------------------------------------------------------
# the labeled chain


def chain_step(q: SplitLaw, pi: SetPartition, rng: np.random.Generator) -> SetPartition:
    """One step: every block of size >= 2 is refreshed independently; singletons stay."""
    blocks: list[tuple[int, ...]] = []
    for b in pi.blocks:
        if len(b) == 1:
            blocks.append(b)
            continue
        lam = q.sample(len(b), rng)
        if lam.p <= 1:
            blocks.append(b)
        else:
            blocks.extend(uniform_shape_partition(lam, b, rng).blocks)
    return SetPartition(tuple(blocks))


@dataclass(frozen=True)
class LabeledTree:
    """A genealogy tree whose leaves carry the labels of a set C.

    ``structure`` is an :class:`EdgeTree` with unit lengths (planted edge
    included) whose leaves hold the labels.
    """

    structure: EdgeTree

    @property
    def tree(self) -> Tree:
        return self.structure.shape

    @property
    def labels(self) -> frozenset:
        return frozenset(x for x in self.structure.leaf_labels if x is not None)

    def relabel(self, mapping) -> "LabeledTree":
        def go(v: EdgeTree) -> EdgeTree:
            lab = mapping[v.label] if v.label is not None else None
            return EdgeTree(v.length, tuple(go(c) for c in v.children), lab)

        return LabeledTree(go(self.structure))

    def key(self):
        """Hashable canonical form of the labeled shape."""
        memo = {}
        stack = [(self.structure, False)]
        while stack:
            v, done = stack.pop()
            if done:
                memo[id(v)] = (v.label, tuple(sorted((memo[id(c)] for c in v.children), key=repr)))
                continue
            stack.append((v, True))
            stack.extend((c, False) for c in v.children)
        return memo[id(self.structure)]


def labeled_tree(q: SplitLaw, C: Iterable[int], rng: np.random.Generator
                 ) -> tuple[LabeledTree, ChainPath]:
    """Run the chain from the one-block partition of C until all singletons.

    Returns the genealogy tree of the blocks and the path.
    """
    ground = sorted(set(C))
    if not ground:
        raise ValueError("the label set must be nonempty")
    state = SetPartition.coarsest(ground)
    states = [state]
    while not state.is_finest():
        state = chain_step(q, state, rng)
        states.append(state)
    path = ChainPath(tuple(states))
    return LabeledTree(_genealogy(path)), path


def _genealogy(path: ChainPath) -> EdgeTree:
    # each (time, block) pair is a vertex; its children are the blocks at time+1 inside it
    last = len(path) - 1
    built: dict[tuple[int, tuple], EdgeTree] = {}
    order = []
    stack = [(0, tuple(sorted(path.ground)))]
    while stack:
        t, block = stack.pop()
        if len(block) == 1:
            built[(t, block)] = EdgeTree(1.0, (), block[0])
            continue
        nxt = path.at(t + 1) if t < last else path.at(last)
        members = set(block)
        kids = [b for b in nxt.blocks if b[0] in members]
        order.append(((t, block), [(t + 1, b) for b in kids]))
        stack.extend((t + 1, b) for b in kids)
    for key, kids in reversed(order):
        built[key] = EdgeTree(1.0, tuple(built[k] for k in kids))
    return built[(0, tuple(sorted(path.ground)))]


# ---------------------------------------------------------------------------
# exact laws


def _law_table(q: SplitLaw, n: int, exact: bool):
    if exact and hasattr(q, "table_exact"):
        return q.table_exact(n)
    return q.table(n)


def _multiset_laws(law: dict[Tree, object], k: int, one):
    """Law of the multiset of k i.i.d. draws from ``law`` as (children tuple, prob)."""
    items = list(law.items())
    out = []
    for combo in combinations_with_replacement(range(len(items)), k):
        coef = math.factorial(k)
        prob = one
        for i, c in Counter(combo).items():
            coef //= math.factorial(c)
            prob = prob * items[i][1] ** c
        out.append((tuple(items[i][0] for i in combo), prob * coef))
    return out


def exact_Q_law(q: SplitLaw, n: int, exact: bool | None = None,
                cap: int = EXACT_LAW_CAP) -> dict[Tree, object]:
    """The law Q^q_n as a map tree -> probability, by recursion over sizes.

    With ``exact`` (default: when q offers rational tables) the values are
    Fractions and sum to 1 exactly.
    """
    if q.model != "vertex":
        raise ValueError("exact_Q_law needs a vertex-model law")
    if n < 1:
        raise ValueError("n must be positive")
    if n > cap:
        raise ValueError(f"n = {n} exceeds the size cap {cap}")
    if exact is None:
        exact = hasattr(q, "table_exact")
    one = Fraction(1) if exact else 1.0
    laws: dict[int, dict[Tree, object]] = {1: {LEAF: one}}
    for k in range(2, n + 1):
        out: dict[Tree, object] = {}
        try:
            tab = _law_table(q, k - 1, exact)
        except ValueError:
            # sizes a law never produces (e.g. even GW sizes for binary offspring)
            if k == n:
                raise
            laws[k] = {}
            continue
        for lam, p in tab.items():
            if not p:
                continue
            combos = [((), one * p)]
            for j, m in sorted(lam.multiplicities().items(), reverse=True):
                group = _multiset_laws(laws[j], m, one)
                combos = [(a + b, pa * pb) for a, pa in combos for b, pb in group]
            for kids, pr in combos:
                t = Tree.node(kids)
                out[t] = out.get(t, 0) + pr
        laws[k] = out
    return laws[n]


def exact_P_law(q: SplitLaw, n: int, tail: float = 1e-13,
                cap: int = EXACT_LAW_CAP) -> dict[Tree, float]:
    """The law P^q_n, with geometric holds truncated once their tail is below ``tail``."""
    if q.model != "leaf":
        raise ValueError("exact_P_law needs a leaf-model law")
    if n > cap:
        raise ValueError(f"n = {n} exceeds the size cap {cap}")

    def holds(stay: float) -> list[tuple[int, float]]:
        if stay <= 0:
            return [(0, 1.0)]
        out, g, pr = [], 0, 1.0 - stay
        while stay**g > tail:
            out.append((g, pr * stay**g))
            g += 1
        return out

    p1 = q.pmf(1, EMPTY)
    laws: dict[int, dict[Tree, float]] = {1: {}}
    for g, pr in holds(1.0 - p1):
        laws[1][_wrap(LEAF, g)] = pr
    for k in range(2, n + 1):
        tab = q.table(k)
        stay = tab.get(IntPartition((k,)), 0.0)
        base: dict[Tree, float] = {}
        for lam, p in tab.items():
            if lam.p <= 1 or not p:
                continue
            combos = [((), p / (1.0 - stay))]
            for j, m in sorted(lam.multiplicities().items(), reverse=True):
                group = _multiset_laws(laws[j], m, 1.0)
                combos = [(a + b, pa * pb) for a, pa in combos for b, pb in group]
            for kids, pr in combos:
                t = Tree.node(kids)
                base[t] = base.get(t, 0.0) + pr
        out: dict[Tree, float] = {}
        for g, pg in holds(stay):
            for t, pr in base.items():
                w = _wrap(t, g)
                out[w] = out.get(w, 0.0) + pg * pr
        laws[k] = out
    return laws[n]


# ---------------------------------------------------------------------------
# (alpha, theta) growth


def alpha_theta_grow(alpha: float, theta: float, n: int, rng: np.random.Generator,
                     return_split: bool = False):
    """The unlabeled (alpha, theta) tree with n leaves, grown leaf by leaf.

    At a vertex whose subtrees have k (the one holding the smallest label)
    and n - k leaves, the new leaf goes on the edge above the vertex with
    weight alpha, into the first subtree with weight k - alpha, or into the
    second with weight n - k - 1 + theta. The planted edge is dropped.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not theta >= 0.0:
        raise ValueError("theta must be nonnegative")
    if n < 1:
        raise ValueError("n must be positive")
    left = [-1]
    right = [-1]
    size = [1]
    root = 0
    for _ in range(1, n):
        leaf = len(size)
        left.append(-1); right.append(-1); size.append(1)
        v, parent, side = root, -1, 0
        while True:
            if left[v] < 0:
                target = True
            else:
                k, tot = size[left[v]], size[v]
                w = np.array([alpha, k - alpha, tot - k - 1 + theta])
                choice = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
                target = choice == 0
            if target:
                b = len(size)
                left.append(v); right.append(leaf); size.append(size[v] + 1)
                if parent < 0:
                    root = b
                elif side == 0:
                    left[parent] = b
                else:
                    right[parent] = b
                break
            size[v] += 1
            parent, side = v, (0 if choice == 1 else 1)
            v = left[v] if choice == 1 else right[v]
    if return_split:
        if left[root] < 0:
            return EMPTY
        return IntPartition.from_parts((size[left[root]], size[right[root]]))
    return _binary_to_tree(root, left, right)


def _binary_to_tree(root: int, left: list[int], right: list[int]) -> Tree:
    built: dict[int, Tree] = {}
    stack = [(root, False)]
    while stack:
        v, done = stack.pop()
        if left[v] < 0:
            built[v] = LEAF
        elif done:
            built[v] = Tree.node((built[left[v]], built[right[v]]))
        else:
            stack.extend(((v, True), (left[v], False), (right[v], False)))
    return built[root]


def alpha_theta_root_splits(alpha: float, theta: float, n: int, reps: int,
                            rng: np.random.Generator) -> Counter:
    """Counts of the root split of ``reps`` grown trees."""
    return Counter(alpha_theta_grow(alpha, theta, n, rng, return_split=True) for _ in range(reps))


# ---------------------------------------------------------------------------
# conditioned Galton-Watson trees through the Lukasiewicz path


def gw_offspring_sequence(xi: OffspringLaw, n: int, rng: np.random.Generator,
                          max_tries: int = 10**6) -> np.ndarray:
    """Offspring counts in depth-first order of a GW tree conditioned on n vertices.

    i.i.d. counts conditioned on summing to n - 1, then the cyclic shift
    that makes them a Lukasiewicz path.
    """
    pmf = xi.array
    support = np.nonzero(pmf)[0]
    if support.size == 2 and support[0] == 0:
        d = int(support[1])
        if (n - 1) % d:
            raise ValueError(f"no GW tree with {n} vertices for this offspring law")
        x = np.zeros(n, dtype=np.int64)
        x[rng.choice(n, (n - 1) // d, replace=False)] = d
    else:
        alias = AliasTable(pmf)
        for _ in range(max_tries):
            x = alias.draw(rng, n)
            if x.sum() == n - 1:
                break
        else:
            raise RuntimeError("rejection budget exceeded")
    walk = np.cumsum(x - 1)
    start = int(np.argmin(walk)) + 1
    return np.concatenate([x[start:], x[:start]])


def _parents_from_offspring(x: np.ndarray) -> list[int]:
    parents = [-1] * len(x)
    stack: list[list[int]] = []
    for v, c in enumerate(x):
        if stack:
            top = stack[-1]
            parents[v] = top[0]
            top[1] -= 1
            if top[1] == 0:
                stack.pop()
        if c:
            stack.append([v, int(c)])
    return parents


def gw_tree(xi: OffspringLaw, n: int, rng: np.random.Generator) -> Tree:
    """An unordered GW tree conditioned on n vertices."""
    return Tree.from_parents(_parents_from_offspring(gw_offspring_sequence(xi, n, rng)))


def _heights_from_offspring(x: np.ndarray) -> int:
    best, stack = 0, []
    depth = 0
    for c in x:
        best = max(best, depth)
        if c:
            stack.append([depth, int(c)])
            depth += 1
        else:
            while stack:
                stack[-1][1] -= 1
                if stack[-1][1]:
                    depth = stack[-1][0] + 1
                    break
                stack.pop()
    return best


def gw_heights(xi: OffspringLaw, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Heights of ``reps`` GW trees conditioned on n vertices."""
    return np.array([_heights_from_offspring(gw_offspring_sequence(xi, n, rng))
                     for _ in range(reps)])


def gw_uniform_vertex_depths(xi: OffspringLaw, n: int, reps: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Depth of a uniform vertex in each of ``reps`` conditioned GW trees.

    Uses depth(u) = #{k < u : W_k = min over k <= j <= u of W_j} for the
    Lukasiewicz path W.
    """
    out = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        x = gw_offspring_sequence(xi, n, rng)
        u = int(rng.integers(n))
        w = np.concatenate([[0], np.cumsum(x[:u] - 1)])
        suffix_min = np.minimum.accumulate(w[::-1])[::-1]
        out[i] = int(np.count_nonzero(w[:u] == suffix_min[:u]))
    return out
