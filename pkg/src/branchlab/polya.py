"""Counting, ranking and uniform generation of rooted unordered trees with bounded degree.

Trees are counted by vertices. With degree bound m every vertex has at most
m children (m = inf means no bound). The size of a root split is counted
through forests: a tree with n vertices is a root plus a forest of n - 1
vertices with at most m components.

Two kinds of tables are kept. Exact tables hold Python integers and back
ranking, the exact split law and small-n sampling. Float tables are tilted
by x = 1 / rho_hat, i.e. they store T_n * x**n, which stays of order
n**-1.5 and lets samplers and the depth chain run at sizes in the thousands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .partitions import IntPartition, iter_partitions
from .splitlaws import NotEnumerable, SplitLaw, parts_matrix
from .trees import LEAF, Tree

__all__ = [
    "CountTables",
    "otter_counts",
    "shape_count_poly",
    "UniformLaw",
    "uniform_law",
    "uniform_tree",
    "unrank_tree",
    "rank_tree",
    "CouplingOutcome",
    "natural_coupling",
    "Constants",
    "constants",
    "random_subtree",
    "uniform_vertex_depths",
    "rand_below",
]

INF = math.inf


def _norm_m(m) -> float | int:
    if m is None or m == INF or (isinstance(m, str) and m.lower() in ("inf", "infinity")):
        return INF
    m = int(m)
    if m < 1:
        raise ValueError("the degree bound must be at least 1")
    return m


def rand_below(rng: np.random.Generator, n: int) -> int:
    """A uniform integer in [0, n) for arbitrary-size n.

    Draws 64 more random bits than n needs and reduces modulo n, so the
    bias is below 2**-64.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if n < 2**62:
        return int(rng.integers(n))
    words = (n.bit_length() + 64 + 31) // 32
    x = 0
    for w in rng.integers(0, 2**32, size=words, dtype=np.uint64):
        x = (x << 32) | int(w)
    return x % n


def _pick_int(weights: list[int], rng) -> int:
    total = sum(weights)
    u = rand_below(rng, total)
    for i, w in enumerate(weights):
        if u < w:
            return i
        u -= w
    raise AssertionError("unreachable")


def _pick_float(weights, rng) -> int:
    w = np.asarray(weights, dtype=float)
    cum = np.cumsum(w)
    if not cum[-1] > 0:
        raise ArithmeticError("all weights underflowed")
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), w.size - 1))


class CountTables:
    """Exact counts T[n] of m-bounded trees with n vertices, n <= N.

    Also T_tilde[n] (root degree at most m - 2) and, for finite m,
    R[d][n] (root degree at most d). Forest tables used for ranking and
    sampling are built on demand.
    """

    def __init__(self, m, N: int):
        self.m = _norm_m(m)
        if N < 1:
            raise ValueError("N must be positive")
        self.N = int(N)
        if self.m == INF:
            self.T = _euler_counts(self.N)
            self.T_tilde = list(self.T)
            self.R = None
        else:
            self.T, self.R = _bounded_counts(int(self.m), self.N)
            d = int(self.m) - 2
            self.T_tilde = [0] + [self.R[d][n] if d >= 0 else 0 for n in range(1, self.N + 1)]
        self._F: dict[int, list[int]] = {}
        self._phi: _ExactForests | None = None
        self._tilted: dict[int, _TiltedTables] = {}
        self._fphi: dict[int, _FloatForests] = {}

    # -- exact forests ---------------------------------------------------
    def forests(self, n: int) -> "_ExactForests":
        if n > self.N:
            raise ValueError(f"n = {n} exceeds the table size N = {self.N}")
        if self._phi is None or self._phi.n < n:
            self._phi = _ExactForests(self, max(n, 2 * self._phi.n if self._phi else 0, 16))
        return self._phi

    def multiset_count(self, c: int, k: int) -> int:
        """F_c(k): multisets of k trees of size c."""
        row = self._F.setdefault(c, [1])
        T = self.T[c]
        while len(row) <= k:
            j = len(row)
            row.append(row[-1] * (T + j - 1) // j)
        return row[k]

    # -- tilted float tables ----------------------------------------------
    def rho_estimate(self) -> float:
        return _rho_from_counts(self.T)

    def tilted(self, n: int) -> "_TiltedTables":
        """Float tables T_k x**k for k <= n with x = 1 / rho_hat."""
        for size, tab in self._tilted.items():
            if size >= n:
                return tab
        if self.N < 60:
            raise ValueError("tilted tables need exact counts up to N >= 60")
        tab = _TiltedTables(self.m, n, 1.0 / self.rho_estimate())
        self._tilted[n] = tab
        return tab

    def float_forests(self, n: int) -> "_FloatForests":
        if self.m != INF:
            raise NotEnumerable("float forest tables are available for m = inf only")
        for size, tab in self._fphi.items():
            if size >= n:
                return tab
        tab = _FloatForests(self.tilted(n), n)
        self._fphi[n] = tab
        return tab

    def to_json(self) -> dict:
        m = "inf" if self.m == INF else int(self.m)
        return {"m": m, "N": self.N, "T": [str(x) for x in self.T[1:]],
                "T_tilde": [str(x) for x in self.T_tilde[1:]]}


def _euler_counts(N: int) -> list[int]:
    """Otter's recurrence T_{n+1} = (1/n) sum_k (sum_{d|k} d T_d) T_{n-k+1}."""
    T = [0, 1]
    s = [0] * (N + 1)  # s[k] = sum_{d | k} d T_d
    for n in range(1, N):
        for d in range(1, n + 1):
            if n % d == 0:
                s[n] += d * T[d]
        T.append(sum(s[k] * T[n - k + 1] for k in range(1, n + 1)) // n)
    return T[: N + 1]


def _bounded_counts(m: int, N: int) -> tuple[list[int], list[list[int]]]:
    """Counts for degree bound m through forests with at most m components."""
    # E[s][p]: forests of total size s with exactly p components
    E = [[0] * (m + 1) for _ in range(N)]
    E[0][0] = 1
    T = [0] * (N + 1)
    for j in range(1, N + 1):
        T[j] = sum(E[j - 1])
        if j == N:
            break
        tj = T[j]
        for s in range(N - 1, j - 1, -1):
            row = E[s]
            for p in range(m, 0, -1):
                acc = 0
                k = 1
                while k <= p and k * j <= s:
                    acc += math.comb(tj + k - 1, k) * E[s - k * j][p - k]
                    k += 1
                row[p] += acc
    R = [[0] * (N + 1) for _ in range(m + 1)]
    for d in range(m + 1):
        for n in range(1, N + 1):
            R[d][n] = sum(E[n - 1][: d + 1])
    return T, R


def _rho_from_counts(T: list[int]) -> float:
    """Growth rate from ratios corrected for the n**-1.5 factor, then Aitken."""
    N = len(T) - 1
    r = [T[n + 1] / T[n] * ((n + 1) / n) ** 1.5 for n in range(max(2, N - 40), N) if T[n] > 0]
    if len(r) < 3:
        raise ValueError("too few counts to estimate rho")
    a, b, c = r[-3], r[-2], r[-1]
    den = c - 2 * b + a
    return c - (c - b) ** 2 / den if abs(den) > 1e-300 else c


# ---------------------------------------------------------------------------
# forest tables


class _ExactForests:
    """Phi[c][r][p]: forests of total size r, trees of size <= c, at most p components.

    For m = inf the component dimension is dropped.
    """

    def __init__(self, tables: CountTables, n: int):
        self.tables = tables
        self.n = n = min(n, tables.N)
        m = tables.m
        self.bounded = m != INF
        P = int(m) if self.bounded else 0
        self.P = P
        if self.bounded:
            E = [[0] * (P + 1) for _ in range(n + 1)]
            E[0][0] = 1
            self.phi = [[_prefix(row) for row in E]]
            for c in range(1, n + 1):
                new = [list(row) for row in E]
                for s in range(c, n + 1):
                    for p in range(1, P + 1):
                        acc = 0
                        k = 1
                        while k <= p and k * c <= s:
                            acc += tables.multiset_count(c, k) * E[s - k * c][p - k]
                            k += 1
                        new[s][p] += acc
                E = new
                self.phi.append([_prefix(row) for row in E])
        else:
            G = [1] + [0] * n
            self.phi = [list(G)]
            for c in range(1, n + 1):
                new = list(G)
                for s in range(c, n + 1):
                    acc = 0
                    for k in range(1, s // c + 1):
                        acc += tables.multiset_count(c, k) * G[s - k * c]
                    new[s] += acc
                G = new
                self.phi.append(list(G))

    def get(self, r: int, c: int, p: int | None = None) -> int:
        if r < 0:
            return 0
        c = min(c, r) if r > 0 else 0
        if self.bounded:
            if p is None:
                p = self.P
            if p < 0:
                return 0
            return self.phi[c][r][min(p, self.P)]
        return self.phi[c][r]


def _prefix(row: list[int]) -> list[int]:
    out, acc = [], 0
    for v in row:
        acc += v
        out.append(acc)
    return out


class _TiltedTables:
    """t[k] = T_k x**k, and for finite m r[d][k] = R_d[k] x**k."""

    def __init__(self, m, n: int, x: float):
        self.m, self.n, self.x = m, n, x
        t = np.zeros(n + 1)
        if m == INF:
            G = np.zeros(n + 1)
            G[0] = 1.0
            for j in range(1, n + 1):
                t[j] = x * G[j - 1]
                if j == n:
                    break
                xj = x**j
                old = G.copy()
                f = 1.0
                for k in range(1, n // j + 1):
                    f *= (t[j] + (k - 1) * xj) / k
                    if f == 0.0:
                        break
                    G[k * j:] += f * old[: n + 1 - k * j]
            self.r = None
        else:
            P = int(m)
            E = np.zeros((n + 1, P + 1))
            E[0, 0] = 1.0
            for j in range(1, n + 1):
                t[j] = x * E[j - 1].sum()
                if j == n:
                    break
                xj = x**j
                old = E.copy()
                f = 1.0
                for k in range(1, min(P, n // j) + 1):
                    f *= (t[j] + (k - 1) * xj) / k
                    E[k * j:, k:] += f * old[: n + 1 - k * j, : P + 1 - k]
            cum = np.cumsum(E, axis=1)
            self.r = np.zeros((P + 1, n + 1))
            self.r[:, 1:] = x * cum[:n].T
        self.t = t


class _FloatForests:
    """Tilted Phi[r][c] = Phi_c(r) x**r for m = inf, r, c <= n."""

    def __init__(self, tilt: _TiltedTables, n: int):
        self.n, self.x, self.t = n, tilt.x, tilt.t
        phi = np.zeros((n + 1, n + 1))
        G = np.zeros(n + 1)
        G[0] = 1.0
        phi[:, 0] = G
        for c in range(1, n + 1):
            xc = self.x**c
            old = G.copy()
            f = 1.0
            for k in range(1, n // c + 1):
                f *= (self.t[c] + (k - 1) * xc) / k
                if f == 0.0:
                    break
                G[k * c:] += f * old[: n + 1 - k * c]
            phi[:, c] = G
        self.phi = phi

    def f(self, c: int, k: int) -> float:
        """F_c(k) x**(k c)."""
        out = 1.0
        xc = self.x**c
        for i in range(k):
            out *= (self.t[c] + i * xc) / (i + 1)
        return out


# ---------------------------------------------------------------------------
# counts and the split law


def otter_counts(m, N: int) -> CountTables:
    return CountTables(m, N)


def shape_count_poly(tables: CountTables, n: int, lam: IntPartition, rule: str = "bijection") -> int:
    """S_n(lambda): trees with n vertices whose root subtrees have sizes lambda.

    ``rule="bijection"`` sets S = 0 when lambda has more than m parts;
    ``rule="literal"`` already when it has m or more.
    """
    if lam.is_empty:
        if n != 1:
            raise ValueError("the empty partition belongs to n = 1")
        return 1
    if lam.n != n - 1:
        raise ValueError(f"lambda is a partition of {lam.n}, expected {n - 1}")
    if n > tables.N:
        raise ValueError(f"n = {n} exceeds N = {tables.N}")
    if tables.m != INF:
        limit = int(tables.m)
        if rule == "bijection" and lam.p > limit:
            return 0
        if rule == "literal" and lam.p >= limit:
            return 0
        if rule not in ("bijection", "literal"):
            raise ValueError("rule must be 'bijection' or 'literal'")
    out = 1
    for c, k in lam.multiplicities().items():
        out *= tables.multiset_count(c, k)
    return out


class UniformLaw(SplitLaw):
    """q_n(lambda) = S_{n+1}(lambda) / T_{n+1}: the root split of a uniform tree."""

    model = "vertex"

    def __init__(self, tables: CountTables, table_cap: int = 40):
        super().__init__(0.5)
        self.tables = tables
        self.table_cap = table_cap
        self.name = f"uniform({'inf' if tables.m == INF else int(tables.m)})"

    def _check(self, n: int, exact: bool = True) -> None:
        if n < 1:
            raise ValueError("n must be positive")
        if exact and n + 1 > self.tables.N:
            raise ValueError(f"n + 1 = {n + 1} exceeds N = {self.tables.N}")
        _check_size(self.tables, n + 1)

    def _parts(self, n: int) -> Iterator[IntPartition]:
        width = None if self.tables.m == INF else int(self.tables.m)
        for parts in iter_partitions(n, max_parts=width):
            yield IntPartition(parts)

    def table_exact(self, n: int) -> dict[IntPartition, Fraction]:
        self._check(n)
        if n > self.table_cap:
            raise NotEnumerable(f"P_{n} is too large to enumerate")
        total = self.tables.T[n + 1]
        return {lam: Fraction(shape_count_poly(self.tables, n + 1, lam), total)
                for lam in self._parts(n)}

    def table(self, n: int) -> dict[IntPartition, float]:
        return {k: float(v) for k, v in self.table_exact(n).items()}

    def pmf(self, n: int, lam: IntPartition) -> float:
        self._check(n)
        if lam.is_empty or lam.n != n:
            return 0.0
        return shape_count_poly(self.tables, n + 1, lam) / self.tables.T[n + 1]

    def sample(self, n: int, rng: np.random.Generator) -> IntPartition:
        self._check(n, exact=False)
        return IntPartition(tuple(_sample_parts(self.tables, n, rng)))

    def sample_many(self, n, size, rng):
        self._check(n, exact=False)
        return parts_matrix([_sample_parts(self.tables, n, rng) for _ in range(size)])


def uniform_law(tables: CountTables) -> UniformLaw:
    return UniformLaw(tables)


def _check_size(tables: CountTables, n: int) -> None:
    # beyond the exact tables only the float path (m = inf) is available
    if n < 1 or (n > tables.N and tables.m != INF):
        raise ValueError(f"n must lie in [1, {tables.N}]")


def _use_exact(tables: CountTables, n: int) -> bool:
    return n <= min(tables.N, 300) or tables.m != INF


def _sample_parts(tables: CountTables, r: int, rng) -> list[int]:
    """Parts of a uniform forest of size r with the degree bound, largest first."""
    parts: list[int] = []
    if _use_exact(tables, r):
        F = tables.forests(r)
        c = r
        p = None if tables.m == INF else int(tables.m)
        while r > 0:
            # largest part: smallest c' with Phi(r, c') > u
            u = rand_below(rng, F.get(r, c, p))
            lo, hi = 1, c
            while lo < hi:
                mid = (lo + hi) // 2
                if F.get(r, mid, p) > u:
                    hi = mid
                else:
                    lo = mid + 1
            c = lo
            ks = range(1, r // c + 1 if p is None else min(r // c, p) + 1)
            w = [tables.multiset_count(c, k) * F.get(r - k * c, c - 1, None if p is None else p - k)
                 for k in ks]
            k = ks[_pick_int(w, rng)]
            parts.extend([c] * k)
            r -= k * c
            if p is not None:
                p -= k
            c -= 1
        return parts
    F = tables.float_forests(r)
    c = r
    while r > 0:
        row = F.phi[r, : c + 1]
        u = rng.random() * row[c]
        c = int(np.searchsorted(row, u, side="right"))
        c = max(1, min(c, r))
        w = [F.f(c, k) * F.phi[r - k * c, c - 1] for k in range(1, r // c + 1)]
        k = 1 + _pick_float(w, rng)
        parts.extend([c] * k)
        r -= k * c
        c -= 1
    return parts


# ---------------------------------------------------------------------------
# uniform trees


def _mset_split(tables: CountTables, c: int, k: int, rng, exact: bool) -> list[int]:
    """Replication counts of a uniform multiset of k trees of size c.

    Uses k F(k) = sum_i T F(k - i): choose i, take i copies of one
    uniform tree, repeat with k - i.
    """
    out = []
    while k > 0:
        if exact:
            T = tables.T[c]
            w = [T * tables.multiset_count(c, k - i) for i in range(1, k + 1)]
            i = 1 + _pick_int(w, rng)
        else:
            F = tables.float_forests(c)
            xc = F.x**c
            w = [F.t[c] * xc ** (i - 1) * F.f(c, k - i) for i in range(1, k + 1)]
            i = 1 + _pick_float(w, rng)
        out.append(i)
        k -= i
    return out


def uniform_tree(tables: CountTables, n: int, rng: np.random.Generator,
                 method: str = "recursive") -> Tree:
    """A uniform tree with n vertices and the degree bound of ``tables``.

    ``method="rank"`` draws a uniform rank and unranks it; the default
    recursive method samples the root split and then each group of equal
    sizes as a uniform multiset.
    """
    _check_size(tables, n)
    if method == "rank":
        return unrank_tree(tables, n, rand_below(rng, tables.T[n]))
    if method != "recursive":
        raise ValueError("method must be 'recursive' or 'rank'")
    built: dict[int, Tree] = {}
    order: list[tuple[int, list[int]]] = []
    pending = [(n, 0)]
    next_id = 1
    while pending:
        size, ident = pending.pop()
        if size == 1:
            built[ident] = LEAF
            continue
        parts = _sample_parts(tables, size - 1, rng)
        exact = _use_exact(tables, size - 1)
        kids: list[int] = []
        for c, k in _groups(parts):
            for copies in _mset_split(tables, c, k, rng, exact):
                kids.extend([next_id] * copies)
                pending.append((c, next_id))
                next_id += 1
        order.append((ident, kids))
    for ident, kids in reversed(order):
        built[ident] = Tree.node(built[c] for c in kids)
    return built[0]


def _groups(parts) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for c in parts:
        if out and out[-1][0] == c:
            out[-1] = (c, out[-1][1] + 1)
        else:
            out.append((c, 1))
    return out


# ---------------------------------------------------------------------------
# ranking in the canonical order


def _lambda_offset(tables: CountTables, F: _ExactForests, lam_groups, r: int) -> int:
    """Number of forests of size r whose split precedes lambda (reverse lex)."""
    bounded = tables.m != INF
    p = int(tables.m) if bounded else None
    mult = dict(lam_groups)
    offset = 0
    # splits agreeing with lambda above c share the factor prod F_c'(k_c')
    above = 1
    for c in range(r, 0, -1):
        if r == 0:
            break
        kc = mult.get(c, 0)
        kmax = r // c if p is None else min(r // c, p)
        for k in range(kc + 1, kmax + 1):
            offset += above * tables.multiset_count(c, k) * F.get(
                r - k * c, c - 1, None if p is None else p - k)
        above *= tables.multiset_count(c, kc)
        r -= kc * c
        if p is not None:
            p -= kc
    return offset


def _multiset_rank(idx: list[int]) -> int:
    """Rank of a non-increasing index sequence in lexicographic order."""
    k = len(idx)
    return sum(math.comb(i + k - r, k - r + 1) for r, i in enumerate(idx, start=1))


def _multiset_unrank(R: int, k: int, universe: int) -> list[int]:
    out = []
    hi = universe - 1
    for r in range(1, k + 1):
        kk = k - r + 1
        # largest i <= hi with comb(i + kk - 1, kk) <= R
        lo, top = 0, hi
        while lo < top:
            mid = (lo + top + 1) // 2
            if math.comb(mid + kk - 1, kk) <= R:
                lo = mid
            else:
                top = mid - 1
        out.append(lo)
        R -= math.comb(lo + kk - 1, kk)
        hi = lo
    return out


def rank_tree(tables: CountTables, t: Tree) -> int:
    """Position of t among m-bounded trees of its size in the canonical order."""
    n = t.size
    if n > tables.N:
        raise ValueError(f"size {n} exceeds N = {tables.N}")
    if tables.m != INF and t.max_children() > tables.m:
        raise ValueError("tree violates the degree bound")
    F = tables.forests(n)
    memo: dict[int, int] = {}
    for s in t.postorder_distinct():
        if s.size == 1:
            memo[s._uid] = 0
            continue
        groups = _groups([k.size for k in s.kids])
        rank = _lambda_offset(tables, F, groups, s.size - 1)
        within = 0
        pos = 0
        for c, k in groups:
            idx = [memo[ch._uid] for ch in s.kids[pos:pos + k]]
            pos += k
            within = within * tables.multiset_count(c, k) + _multiset_rank(idx)
        memo[s._uid] = rank + within
    return memo[t._uid]


def unrank_tree(tables: CountTables, n: int, r: int) -> Tree:
    """Inverse of :func:`rank_tree`."""
    if not 1 <= n <= tables.N:
        raise ValueError(f"n must lie in [1, {tables.N}]")
    if not 0 <= r < tables.T[n]:
        raise ValueError(f"rank {r} out of range [0, {tables.T[n]})")
    F = tables.forests(n)
    return _unrank(tables, F, n, r)


def _unrank(tables, F, n, r) -> Tree:
    if n == 1:
        return LEAF
    rest = n - 1
    p = None if tables.m == INF else int(tables.m)
    groups: list[tuple[int, int]] = []
    c = rest
    above = 1
    while rest > 0:
        kmax = rest // c if p is None else min(rest // c, p)
        # multiplicities are visited from the largest down; larger k comes first
        chosen = 0
        for k in range(kmax, 0, -1):
            block = above * tables.multiset_count(c, k) * F.get(
                rest - k * c, c - 1, None if p is None else p - k)
            if r < block:
                chosen = k
                break
            r -= block
        above *= tables.multiset_count(c, chosen)
        if chosen:
            groups.append((c, chosen))
            rest -= chosen * c
            if p is not None:
                p -= chosen
        c -= 1
    sizes = [tables.multiset_count(c, k) for c, k in groups]
    digits = []
    for base in reversed(sizes):
        digits.append(r % base)
        r //= base
    digits.reverse()
    kids = []
    for (c, k), d in zip(groups, digits):
        for i in _multiset_unrank(d, k, tables.T[c]):
            kids.append(_unrank(tables, F, c, i))
    return Tree.node(kids)


# ---------------------------------------------------------------------------
# the natural coupling


@dataclass(frozen=True)
class CouplingOutcome:
    original: Tree
    coupled: Tree
    jstar: int
    replaced_sizes: tuple[tuple[int, ...], ...] = ()


def _distinct_prob(T: int, k: int) -> tuple[Fraction, Fraction]:
    """(P(uniform multiset has distinct parts), P(k i.i.d. draws are distinct))."""
    falling = 1
    for i in range(k):
        falling *= T - i
    if falling <= 0:
        return Fraction(0), Fraction(0)
    return (Fraction(falling, math.factorial(k) * math.comb(T + k - 1, k)),
            Fraction(falling, T**k))


def _iid_conditioned(tables: CountTables, c: int, k: int, distinct: bool, rng,
                     p_event: Fraction) -> list[Tree]:
    """k i.i.d. uniform trees of size c conditioned on (not) being pairwise distinct."""
    T = tables.T[c]
    if distinct:
        if T <= 10**6:
            ranks = rng.choice(T, size=k, replace=False)
            return [unrank_tree(tables, c, int(i)) for i in ranks]
        while True:
            draw = [uniform_tree(tables, c, rng) for _ in range(k)]
            if len(set(draw)) == k:
                return draw
    if p_event >= Fraction(1, 100):
        while True:
            draw = [uniform_tree(tables, c, rng) for _ in range(k)]
            if len(set(draw)) < k:
                return draw
    # rare collisions: sample the first repeated index directly
    dist = [Fraction(1)]
    for i in range(1, k):
        dist.append(dist[-1] * Fraction(T - i + 1, T) if i > 1 else Fraction(1))
    w = [dist[i - 1] * Fraction(i - 1, T) for i in range(2, k + 1)]
    scale = math.lcm(*[x.denominator for x in w])
    tau = 2 + _pick_int([int(x * scale) for x in w], rng)
    while True:
        head = [uniform_tree(tables, c, rng) for _ in range(tau - 1)]
        if len(set(head)) == tau - 1:
            break
    repeat = head[int(rng.integers(tau - 1))]
    tail = [uniform_tree(tables, c, rng) for _ in range(k - tau)]
    return head + [repeat] + tail


def natural_coupling(tables: CountTables, t: Tree, rng: np.random.Generator) -> CouplingOutcome:
    """Couple a uniform tree t with a tree of the Markov branching law of its root splits.

    Sibling groups of equal size with pairwise distinct members are kept.
    A group with a repeat is replaced, with the probability that makes the
    output multiset law i.i.d., by k i.i.d. uniform trees conditioned on
    being distinct, and otherwise by k i.i.d. trees conditioned on a repeat.
    The procedure recurses into every resulting subtree.
    """
    if t.size > tables.N:
        raise ValueError(f"size {t.size} exceeds N = {tables.N}")
    jstar = 0
    replaced: list[tuple[int, ...]] = []
    built: dict[int, Tree] = {}
    order: list[tuple[int, list[int]]] = []
    pending: list[tuple[Tree, int]] = [(t, 0)]
    next_id = 1
    while pending:
        s, ident = pending.pop()
        if s.size == 1:
            built[ident] = LEAF
            continue
        kids: list[Tree] = []
        pos = 0
        for c, k in _groups([ch.size for ch in s.kids]):
            group = list(s.kids[pos:pos + k])
            pos += k
            if k > 1 and len(set(group)) < k:
                jstar = max(jstar, c)
                p_uni, p_iid = _distinct_prob(tables.T[c], k)
                p_switch = (1 - p_iid) / (1 - p_uni)
                num, den = p_switch.numerator, p_switch.denominator
                keep_repeat = rand_below(rng, den) < num
                group = _iid_conditioned(tables, c, k, not keep_repeat, rng,
                                         1 - p_iid if keep_repeat else p_iid)
                replaced.append((c,) * k)
            kids.extend(group)
        ids = list(range(next_id, next_id + len(kids)))
        next_id += len(kids)
        pending.extend(zip(kids, ids))
        order.append((ident, ids))
    for ident, ids in reversed(order):
        built[ident] = Tree.node(built[i] for i in ids)
    return CouplingOutcome(t, built[0], jstar, tuple(replaced))


# ---------------------------------------------------------------------------
# constants and depths


@dataclass(frozen=True)
class Constants:
    m: float | int
    N: int
    rho: float
    rho_raw: float
    kappa: float
    psi_partial: float
    psi_tail: float
    c_m: float

    CSV_HEADER = ("m", "N", "rho", "rho_raw", "kappa", "psi_partial", "psi_tail", "c_m")

    def csv_row(self) -> list:
        m = "inf" if self.m == INF else int(self.m)
        return [m, self.N, repr(self.rho), repr(self.rho_raw), repr(self.kappa),
                repr(self.psi_partial), repr(self.psi_tail), repr(self.c_m)]


def constants(tables: CountTables) -> Constants:
    """Estimates of rho, kappa, psi_tilde(1/rho) and c_m from the exact counts."""
    N = tables.N
    if N < 100:
        raise ValueError("constants need N >= 100")
    T = tables.T
    rho = _rho_from_counts(T)
    rho_raw = T[N] / T[N - 1]
    kappa = math.exp(math.log(T[N]) + 1.5 * math.log(N) - N * math.log(rho))
    psi = sum(math.exp(math.log(T_) - n * math.log(rho))
              for n, T_ in enumerate(tables.T_tilde) if n >= 1 and T_ > 0)
    last = tables.T_tilde[N]
    # sum_{n > N} kappa~ n**-1.5 is about 2 kappa~ / sqrt(N)
    tail = 2.0 * N * math.exp(math.log(last) - N * math.log(rho)) if last > 0 else 0.0
    c_m = math.sqrt(2.0) / (math.sqrt(math.pi) * kappa * psi)
    return Constants(tables.m, N, rho, rho_raw, kappa, psi, tail, c_m)


def random_subtree(t: Tree, rng: np.random.Generator) -> Tree:
    """The subtree above a uniformly chosen vertex."""
    i = int(rng.integers(t.size))
    for j, s in enumerate(t.preorder()):
        if j == i:
            return s
    raise AssertionError("unreachable")


def uniform_vertex_depths(tables: CountTables, n: int, reps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Depth of a uniform vertex in ``reps`` independent uniform trees of size n.

    Runs the exact chain on subtree sizes: at size k the vertex is the root
    with probability 1/k; otherwise it lies in a child subtree of size j,
    uniform given j, with probability j T_j C_k(j) / ((k - 1) T_k), where
    C_k(j) = sum_{r >= 1} R_{m-r}[k - r j] counts root-subtree copies.
    """
    tab = tables.tilted(n)
    t, x = tab.t, tab.x
    jt = np.arange(n + 1) * t
    logx = math.log(x)
    if tab.m == INF:
        layers = [t]
    else:
        layers = [tab.r[int(tab.m) - r] for r in range(1, int(tab.m) + 1)]
    out = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        k, depth = n, 0
        while k > 1 and rng.random() * k >= 1.0:
            # weight of child size j: j t_j sum_r R_{m-r}[k - r j] x**((r - 1) j)
            w = jt[1:k] * layers[0][k - 1:0:-1]
            if tab.m == INF:
                _add_repeats_inf(w, jt, t, k, logx)
            else:
                for r in range(2, len(layers) + 1):
                    jmax = (k - 1) // r
                    if jmax < 1:
                        break
                    js = np.arange(1, jmax + 1)
                    w[:jmax] += (jt[1:jmax + 1] * layers[r - 1][k - r * js]
                                 * np.exp((r - 1) * logx * js))
            k = 1 + _pick_float(w, rng)
            depth += 1
        out[i] = depth
    return out


def _add_repeats_inf(w: np.ndarray, jt: np.ndarray, t: np.ndarray, k: int, logx: float) -> None:
    """Add the r >= 2 terms of the m = inf weights in about 2 sqrt(k) vector steps."""
    J = math.isqrt(k)
    # small j: all r at once
    for j in range(1, min(J, (k - 1) // 2) + 1):
        rs = np.arange(2, (k - 1) // j + 1)
        w[j - 1] += jt[j] * np.sum(t[k - rs * j] * np.exp((rs - 1) * j * logx))
    # large j: few r each
    for r in range(2, (k - 1) // (J + 1) + 1):
        js = np.arange(J + 1, (k - 1) // r + 1)
        if js.size:
            w[js - 1] += jt[js] * t[k - r * js] * np.exp((r - 1) * logx * js)
