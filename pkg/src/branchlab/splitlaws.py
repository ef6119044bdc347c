"""Splitting laws q_n on integer partitions, and the scaling probe.

A :class:`SplitLaw` is a family (q_n) of distributions on partitions of n.
Leaf-model laws (``model == "leaf"``) drive the leaf-sized trees and must
keep q_n((n)) < 1; for n = 1 they put mass on the empty partition
:data:`~branchlab.partitions.EMPTY` (the ball disappears) and on (1).
Vertex-model laws drive the vertex-sized trees, where q_n splits the n
vertices sitting below the root, and always have q_1((1)) = 1.

The probe of the scaling hypothesis is

    a_n * sum_lambda q_n(lambda) * (1 - lambda_1 / n) * f(lambda / n),

with a_n = n**gamma * ell(n). Test functions ``f`` receive a 2-D array
whose rows are partitions scaled by n and padded with zeros, and return
one value per row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate, signal, special

from .partitions import EMPTY, IntPartition, iter_partitions

__all__ = [
    "SplitLaw",
    "NotEnumerable",
    "AliasTable",
    "TabulatedLaw",
    "tabulated_law",
    "load_tabulated",
    "OffspringLaw",
    "GWLaw",
    "size_biased_order",
    "size_biased_probe",
    "gw_law",
    "AlphaThetaLaw",
    "alpha_theta_law",
    "alpha_theta_q",
    "ConsistentLaw",
    "consistent_law",
    "QuadSpec",
    "PropexempleLaw",
    "propexemple_law",
    "HalvingLaw",
    "CircLaw",
    "circ_transform",
    "ProbeResult",
    "probe_H",
    "pointwise",
    "parts_matrix",
    "EXACT_ENUMERATION_MAX",
]

# exact probe mode enumerates P_n up to this size (unless the support is binary)
EXACT_ENUMERATION_MAX = 40


class NotEnumerable(ValueError):
    """Raised when an exact pmf table is requested for a non-enumerable support."""


def parts_matrix(parts: Sequence[Sequence[int]], width: int | None = None) -> np.ndarray:
    """Stack partitions into a zero-padded integer array."""
    width = width or max((len(p) for p in parts), default=1) or 1
    out = np.zeros((len(parts), width), dtype=np.int64)
    for i, p in enumerate(parts):
        out[i, : len(p)] = p
    return out


def pointwise(f: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], np.ndarray]:
    """Lift a function of one scaled partition to the row-wise probe form."""

    def g(rows: np.ndarray) -> np.ndarray:
        return np.array([f(r[r > 0]) for r in rows], dtype=float)

    return g


class AliasTable:
    """Walker alias sampler over indices 0..k-1."""

    def __init__(self, probs: Sequence[float]):
        p = np.asarray(probs, dtype=float)
        k = p.size
        if k == 0:
            raise ValueError("empty distribution")
        scaled = p * k / p.sum()
        self.prob = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        self.k = k

    def draw(self, rng: np.random.Generator, size: int | None = None):
        i = rng.integers(self.k, size=size)
        u = rng.random(size)
        return np.where(u < self.prob[i], i, self.alias[i])


class SplitLaw:
    """Base class: a family of distributions q_n on partitions of n."""

    name = "law"
    model = "leaf"

    def __init__(self, gamma: float, ell: Callable[[float], float] | None = None):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.gamma = float(gamma)
        self.ell = ell or (lambda n: 1.0)

    # -- to be provided by subclasses ------------------------------------
    def table(self, n: int) -> dict[IntPartition, float]:
        """Exact pmf of q_n as a mapping (support only)."""
        raise NotEnumerable(f"{self.name}: no exact table")

    def sample(self, n: int, rng: np.random.Generator) -> IntPartition:
        tab = self._cached_table(n)
        keys, cum = tab
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return keys[min(i, len(keys) - 1)]

    # -- shared machinery --------------------------------------------------
    def scale(self, n: int) -> float:
        """a_n = n**gamma * ell(n)."""
        val = self.ell(n)
        if not val > 0:
            raise ValueError("ell must be positive")
        return n**self.gamma * val

    def pmf(self, n: int, lam: IntPartition) -> float:
        return self.table(n).get(lam, 0.0)

    def has_exact(self, n: int) -> bool:
        try:
            self._cached_table(n)
        except NotEnumerable:
            return False
        return True

    def _cached_table(self, n: int):
        cache = self.__dict__.setdefault("_tables", {})
        if n not in cache:
            tab = self.table(n)
            keys = list(tab)
            cum = np.cumsum([tab[k] for k in keys])
            cache[n] = (keys, cum)
        return cache[n]

    def sample_many(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` draws of q_n as a zero-padded (size, width) parts array.

        Draws of the empty partition are rows of zeros.
        """
        try:
            keys, cum = self._cached_table(n)
        except NotEnumerable:
            return parts_matrix([self.sample(n, rng).parts for _ in range(size)])
        idx = np.searchsorted(cum, rng.random(size) * cum[-1], side="right")
        idx = np.minimum(idx, len(keys) - 1)
        mat = parts_matrix([k.parts for k in keys])
        return mat[idx]

    def trivial_mass(self, n: int) -> float:
        """q_n((n))."""
        return self.pmf(n, IntPartition((n,)))

    def sample_nontrivial(self, n: int, rng: np.random.Generator) -> IntPartition:
        """A draw of q_n conditioned on not being (n)."""
        triv = IntPartition((n,))
        try:
            tab = self.table(n)
        except NotEnumerable:
            for _ in range(10**6):
                lam = self.sample(n, rng)
                if lam != triv:
                    return lam
            raise RuntimeError(f"{self.name}: q_{n}(({n})) too close to 1 for rejection")
        keys = [k for k in tab if k != triv]
        if not keys:
            raise ValueError(f"{self.name}: q_{n}(({n})) = 1")
        cum = np.cumsum([tab[k] for k in keys])
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return keys[min(i, len(keys) - 1)]

    def check(self, n_max: int) -> None:
        """Validate normalisation and the leaf-model condition up to n_max."""
        for n in range(1, n_max + 1):
            tab = self.table(n)
            total = sum(tab.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{self.name}: q_{n} sums to {total!r}")
            if self.model == "leaf" and tab.get(IntPartition((n,)), 0.0) >= 1.0:
                raise ValueError(f"{self.name}: q_{n}(({n})) = 1 in a leaf model")


# ---------------------------------------------------------------------------
# tabulated laws


def _as_partition(parts) -> IntPartition:
    if isinstance(parts, IntPartition):
        return parts
    parts = list(parts)
    return EMPTY if not parts else IntPartition.from_parts(parts)


class TabulatedLaw(SplitLaw):
    """A law given by explicit per-n tables, sampled with alias tables."""

    name = "tabulated"

    def __init__(self, entries: Mapping[int, Iterable[tuple]], model: str = "leaf",
                 gamma: float = 1.0, ell=None, name: str | None = None):
        super().__init__(gamma, ell)
        if model not in ("leaf", "vertex"):
            raise ValueError("model must be 'leaf' or 'vertex'")
        self.model = model
        if name:
            self.name = name
        self._entries: dict[int, dict[IntPartition, float]] = {}
        for n, rows in entries.items():
            n = int(n)
            tab: dict[IntPartition, float] = {}
            for parts, p in rows:
                lam = _as_partition(parts)
                if lam.n != n:
                    raise ValueError(f"partition {lam} does not sum to {n}")
                if lam.is_empty and model == "vertex":
                    raise ValueError("the empty partition only exists in the leaf model")
                if p < 0:
                    raise ValueError("negative probability")
                if p > 0:
                    tab[lam] = tab.get(lam, 0.0) + float(p)
            total = sum(tab.values())
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"q_{n} sums to {total!r}, not 1")
            if model == "leaf" and tab.get(IntPartition((n,)), 0.0) >= 1.0:
                raise ValueError(f"leaf model needs q_{n}(({n})) < 1")
            self._entries[n] = tab
        if 1 not in self._entries:
            self._entries[1] = {EMPTY: 1.0} if model == "leaf" else {IntPartition((1,)): 1.0}
        if model == "vertex" and self._entries[1].get(IntPartition((1,)), 0.0) != 1.0:
            raise ValueError("a vertex-model law needs q_1((1)) = 1")
        self._alias = {n: (list(t), AliasTable(list(t.values()))) for n, t in self._entries.items()}

    @property
    def sizes(self) -> list[int]:
        return sorted(self._entries)

    def table(self, n: int) -> dict[IntPartition, float]:
        if n not in self._entries:
            raise NotEnumerable(f"no table for n = {n}")
        return dict(self._entries[n])

    def sample(self, n: int, rng: np.random.Generator) -> IntPartition:
        if n not in self._alias:
            raise ValueError(f"no table for n = {n}")
        keys, alias = self._alias[n]
        return keys[int(alias.draw(rng))]

    def sample_many(self, n, size, rng):
        if n not in self._alias:
            raise ValueError(f"no table for n = {n}")
        keys, alias = self._alias[n]
        mat = parts_matrix([k.parts for k in keys])
        return mat[alias.draw(rng, size)]

    def to_json(self) -> list[dict]:
        return [{"n": n, "entries": [{"parts": list(l.parts), "p": p} for l, p in t.items()]}
                for n, t in sorted(self._entries.items())]


def tabulated_law(entries, model: str = "leaf", gamma: float = 1.0, ell=None) -> TabulatedLaw:
    """Build a :class:`TabulatedLaw` from ``{n: [(parts, p), ...]}``."""
    return TabulatedLaw(entries, model=model, gamma=gamma, ell=ell)


def load_tabulated(data, model: str = "leaf", gamma: float = 1.0) -> TabulatedLaw:
    """Load the JSON form ``{"n": int, "entries": [{"parts": [...], "p": float}]}``.

    ``data`` may be one such object, a list of them, a JSON string or a path.
    """
    if isinstance(data, str):
        text = data
        if not data.lstrip().startswith(("{", "[")):
            with open(data) as fh:
                text = fh.read()
        data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    entries: dict[int, list] = {}
    for block in data:
        for key in ("n", "entries"):
            if key not in block:
                raise KeyError(key)
        entries[int(block["n"])] = [(e["parts"], float(e["p"])) for e in block["entries"]]
    return TabulatedLaw(entries, model=model, gamma=gamma)


# ---------------------------------------------------------------------------
# Galton-Watson laws


@dataclass(frozen=True)
class OffspringLaw:
    """A critical offspring distribution given by its pmf on 0, 1, 2, ..."""

    pmf: tuple[float, ...]
    name: str = "xi"
    alpha: float | None = None  # tail index for the heavy-tailed family

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 1 or p.size < 2 or np.any(p < 0):
            raise ValueError("offspring pmf must be a nonnegative vector")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"offspring pmf sums to {p.sum()!r}")
        if not p[0] > 0:
            raise ValueError("xi(0) must be positive")
        mean = float(np.dot(np.arange(p.size), p))
        if abs(mean - 1.0) > 1e-12:
            raise ValueError(f"offspring law must be critical, mean is {mean!r}")
        if p[0] + p[1] >= 1.0:
            raise ValueError("offspring law is degenerate")
        object.__setattr__(self, "pmf", tuple(float(x) for x in p))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.pmf)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))

    @property
    def variance(self) -> float:
        k = np.arange(len(self.pmf))
        return float(np.dot((k - 1.0) ** 2, self.pmf))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def max_children(self) -> int:
        nz = np.nonzero(self.array)[0]
        return int(nz[-1])

    @classmethod
    def binary(cls) -> "OffspringLaw":
        return cls((0.5, 0.0, 0.5), name="binary")

    @classmethod
    def poisson(cls, cut: int = 80) -> "OffspringLaw":
        k = np.arange(cut + 1)
        p = np.exp(-1.0 - special.gammaln(k + 1))
        # fold the truncated tail into k in {0, 2} keeping mass and mean
        tail_mass = 1.0 - p.sum()
        tail_mean = 1.0 - float(np.dot(k, p))
        b = tail_mean / 2.0
        p[2] += b
        p[0] += tail_mass - b
        return cls(tuple(p), name="poisson")

    @classmethod
    def geometric(cls, cut: int = 200) -> "OffspringLaw":
        """xi(k) = 2**-(k+1), truncated and re-centred on {0, 2}."""
        k = np.arange(cut + 1)
        return cls._fix_mean(0.5 ** (k + 1.0), "geometric")

    @classmethod
    def heavy_tailed(cls, alpha: float, cut: int = 10**6, tail_mean: float = 0.5) -> "OffspringLaw":
        """xi(k) proportional to k**(-alpha-1) for 2 <= k <= cut, mean fixed at 1 on {0, 1}."""
        if not 1.0 < alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        k = np.arange(2, cut + 1, dtype=float)
        w = k ** (-alpha - 1.0)
        c = tail_mean / float(np.dot(k, w))
        p = np.zeros(cut + 1)
        p[2:] = c * w
        p[1] = 1.0 - tail_mean
        p[0] = 1.0 - p[1:].sum()
        return cls(tuple(p), name=f"stable{alpha:g}", alpha=alpha)

    @classmethod
    def _fix_mean(cls, p: np.ndarray, name: str) -> "OffspringLaw":
        k = np.arange(p.size)
        p = p / p.sum()
        excess = float(np.dot(k, p)) - 1.0
        # move mass between 0 and 2 to hit mean 1 exactly
        shift = excess / 2.0
        p[2] -= shift
        p[0] += shift
        return cls(tuple(p), name=name)


class _WalkTable:
    """Rows xi^{*s}[0:s] of convolution powers, i.e. P(S_s = j - s) for j < s.

    Powers are kept up to a size limit, which doubles when a larger s is
    requested; xi^{*s}(j) for j < limit needs every earlier power up to the
    same index.
    """

    def __init__(self, xi: OffspringLaw):
        self.xi = xi.array
        self.rows: list[np.ndarray] = [np.zeros(0)]
        self.limit = 0
        self._nnz = int(np.count_nonzero(self.xi))

    def ensure(self, s_max: int) -> None:
        if s_max <= self.limit:
            return
        limit = max(2 * self.limit, s_max, 64)
        xi = self.xi[:limit]
        power = np.array([1.0])
        rows = [np.zeros(0)]
        for s in range(1, limit + 1):
            if self._nnz <= 64:
                nxt = np.convolve(power, xi)
            else:
                nxt = np.clip(signal.fftconvolve(power, xi), 0.0, None)
            power = nxt[:limit]
            rows.append(power[:s].copy())
        self.rows = rows
        self.limit = limit

    def low(self, s: int, k: int) -> float:
        """xi^{*s}(s - k) = P(S_s = -k), k >= 1."""
        if k < 1 or k > s:
            return 0.0
        self.ensure(s)
        return float(self.rows[s][s - k])


class GWLaw(SplitLaw):
    """Split law of a Galton-Watson tree conditioned on its number of vertices.

    q_n(lambda) is the law of the sizes of the root subtrees of a tree with
    n + 1 vertices; sizes of single GW trees come from the cyclic lemma.
    """

    name = "gw"
    model = "vertex"

    def __init__(self, xi: OffspringLaw, N: int = 4000):
        super().__init__(0.5)
        if N < 2:
            raise ValueError("N must be at least 2")
        self.xi = xi
        self.N = int(N)
        self._walk = _WalkTable(xi)

    def size_prob(self, k: int) -> float:
        """GW(#t = k) = P(S_k = -1) / k."""
        if k < 1:
            return 0.0
        return self._walk.low(k, 1) / k

    def tau(self, p: int, s: int) -> float:
        """P(tau_p = s) = (p / s) P(S_s = -p); tau_0 = 0."""
        if p == 0:
            return 1.0 if s == 0 else 0.0
        if s < p:
            return 0.0
        return p / s * self._walk.low(s, p)

    def size_probs(self, k_max: int) -> np.ndarray:
        """Array of GW(#t = k) for k = 0..k_max."""
        self._walk.ensure(k_max)
        out = np.zeros(k_max + 1)
        for k in range(1, k_max + 1):
            out[k] = self._walk.rows[k][k - 1] / k
        return out

    def _check_n(self, n: int) -> None:
        if n < 1:
            raise ValueError("n must be positive")
        if n > self.N:
            raise ValueError(f"n = {n} exceeds the table size N = {self.N}")
        if self.size_prob(n + 1) <= 0:
            raise ValueError(f"GW(#t = {n + 1}) = 0: q_{n} is undefined")

    def pmf(self, n: int, lam: IntPartition) -> float:
        self._check_n(n)
        if lam.is_empty or lam.n != n:
            return 0.0
        p = lam.p
        xi = self.xi.pmf
        if p >= len(xi) or xi[p] == 0:
            return 0.0
        log = math.lgamma(p + 1) - sum(math.lgamma(m + 1) for m in lam.multiplicities().values())
        val = math.exp(log) * xi[p]
        for part in lam.parts:
            val *= self.size_prob(part)
        return val / self.size_prob(n + 1)

    def children_law(self, n: int) -> np.ndarray:
        """P(p(lambda) = p) for p = 0..n, via xi(p) P(tau_p = n) / P(tau_1 = n + 1)."""
        self._check_n(n)
        out = np.zeros(n + 1)
        top = min(n, len(self.xi.pmf) - 1)
        for p in range(1, top + 1):
            if self.xi.pmf[p] > 0:
                out[p] = self.xi.pmf[p] * self.tau(p, n)
        return out / self.tau(1, n + 1)

    def table(self, n: int) -> dict[IntPartition, float]:
        self._check_n(n)
        width = min(n, self.xi.max_children)
        if n > EXACT_ENUMERATION_MAX and width > 2:
            raise NotEnumerable(f"P_{n} is too large to enumerate")
        out = {}
        for parts in iter_partitions(n, max_parts=width):
            lam = IntPartition(parts)
            v = self.pmf(n, lam)
            if v > 0:
                out[lam] = v
        return out

    def sample(self, n: int, rng: np.random.Generator) -> IntPartition:
        return IntPartition.from_parts(self.sample_composition(n, rng))

    def sample_composition(self, n: int, rng: np.random.Generator) -> list[int]:
        """Root subtree sizes in plane order: p first, then (X_1, ..., X_p | tau_p = n)."""
        law = self.children_law(n)
        p = int(np.searchsorted(np.cumsum(law), rng.random() * law.sum(), side="right"))
        p = min(p, n)
        sizes = []
        rest = n
        sp = self.size_probs(n)
        for left in range(p, 0, -1):
            if left == 1:
                sizes.append(rest)
                break
            m = np.arange(1, rest - left + 2)
            w = sp[m] * np.array([self.tau(left - 1, rest - mm) for mm in m])
            mm = int(m[np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right")])
            sizes.append(mm)
            rest -= mm
        return sizes


def gw_law(xi: OffspringLaw, N: int = 4000) -> GWLaw:
    return GWLaw(xi, N)


# ---------------------------------------------------------------------------
# (alpha, theta) laws


def alpha_theta_q(alpha: float, theta: float, N: int, k: int) -> float:
    """q_{alpha,theta}(N, k) for 1 <= k <= N, evaluated in log-gamma form."""
    if not 1 <= k <= N:
        return 0.0
    lin = (alpha * (N - k) + theta * k) / N
    if lin == 0.0:
        return 0.0
    if N - k == 0:
        # theta * Gamma(theta) = Gamma(1 + theta) keeps theta = 0 finite
        log = (math.lgamma(k - alpha) + math.lgamma(1.0 + theta)
               - math.lgamma(1.0 - alpha) - math.lgamma(N + theta))
        return math.exp(log)
    log = (math.lgamma(N + 1) - math.lgamma(k + 1) - math.lgamma(N - k + 1)
           + math.lgamma(k - alpha) + math.lgamma(N - k + theta)
           - math.lgamma(1.0 - alpha) - math.lgamma(N + theta))
    return lin * math.exp(log)


class AlphaThetaLaw(SplitLaw):
    """Binary leaf-model law of the (alpha, theta) growth trees."""

    name = "alpha_theta"
    model = "leaf"

    def __init__(self, alpha: float, theta: float):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not theta >= 0.0:
            raise ValueError("theta must be nonnegative")
        super().__init__(alpha)
        self.alpha = float(alpha)
        self.theta = float(theta)

    def table(self, n: int) -> dict[IntPartition, float]:
        if n < 1:
            raise ValueError("n must be positive")
        if n == 1:
            return {EMPTY: 1.0}
        out = {}
        a, t = self.alpha, self.theta
        for k in range(n - 1, (n - 1) // 2, -1):
            if 2 * k == n:
                v = alpha_theta_q(a, t, n - 1, k)
            else:
                v = alpha_theta_q(a, t, n - 1, k) + alpha_theta_q(a, t, n - 1, n - k)
            if v > 0:
                out[IntPartition((k, n - k))] = v
        return out

    def sample_many(self, n, size, rng):
        if n > 200_000:
            raise NotEnumerable("n too large for the (alpha, theta) table")
        return super().sample_many(n, size, rng)


def alpha_theta_law(alpha: float, theta: float) -> AlphaThetaLaw:
    return AlphaThetaLaw(alpha, theta)


# ---------------------------------------------------------------------------
# consistent (paintbox) laws for binary dislocation measures


@dataclass(frozen=True)
class QuadSpec:
    tol: float = 1e-10
    limit: int = 200


def _binary_integral(measure, h: Callable[[np.ndarray], np.ndarray], quad: QuadSpec,
                     upper_cut: float | None = None) -> float:
    """Integral of h(x) against a binary measure on [1/2, 1).

    The density part uses x = 1 - u**2 so the (1 - x)**(-3/2) type
    singularity at 1 becomes harmless; atoms are added directly.
    """
    total = 0.0
    for x, w in getattr(measure, "atoms", ()):
        total += w * float(h(np.asarray([x]))[0])
    own = getattr(measure, "integrate_binary", None)
    dens = getattr(measure, "density", None)
    if own is not None:
        total += own(lambda x: float(h(np.asarray([x]))[0]), quad.tol)
    elif dens is not None:
        lo_u = 0.0 if upper_cut is None else math.sqrt(max(0.0, 1.0 - upper_cut))

        def g(u):
            x = 1.0 - u * u
            return float(dens(x)) * 2.0 * u * float(h(np.asarray([x]))[0])

        val, err = integrate.quad(g, lo_u, math.sqrt(0.5), epsabs=quad.tol, epsrel=quad.tol,
                                  limit=quad.limit)
        if not np.isfinite(val) or err > max(1e3 * quad.tol, 1e-6 * abs(val)):
            raise ArithmeticError(f"quadrature did not converge (err {err:.3g})")
        total += val
    return total


class ConsistentLaw(SplitLaw):
    """Leaf-model law obtained by paintbox sampling from a binary measure nu."""

    name = "consistent"
    model = "leaf"

    def __init__(self, measure, N: int = 200, quad: QuadSpec | None = None, gamma: float = 1.0):
        super().__init__(gamma)
        if getattr(measure, "kind", "binary") not in ("binary", "point", "nu2", "alpha_theta"):
            raise ValueError("consistent_law supports binary measures only")
        if not getattr(measure, "atoms", ()) and getattr(measure, "density", None) is None:
            raise ValueError("consistent_law supports binary measures only")
        self.measure = measure
        self.N = int(N)
        self.quad = quad or QuadSpec()
        self._cache: dict[int, dict[IntPartition, float]] = {}

    def table(self, n: int) -> dict[IntPartition, float]:
        if n < 1:
            raise ValueError("n must be positive")
        if n > self.N:
            raise NotEnumerable(f"n = {n} exceeds N = {self.N}")
        if n == 1:
            return {EMPTY: 1.0}
        if n in self._cache:
            return dict(self._cache[n])
        q = self.quad
        cut = getattr(self.measure, "upper", None)
        z = _binary_integral(self.measure, lambda x: 1.0 - x**n - (1.0 - x) ** n, q, cut)
        out = {}
        for j in range(n - 1, (n - 1) // 2, -1):
            c = math.comb(n, j)
            if 2 * j == n:
                h = lambda x, j=j: c * x**j * (1.0 - x) ** (n - j)
            else:
                h = lambda x, j=j: c * (x**j * (1.0 - x) ** (n - j) + x ** (n - j) * (1.0 - x) ** j)
            v = _binary_integral(self.measure, h, q, cut) / z
            if v > 0:
                out[IntPartition((j, n - j))] = v
        self._cache[n] = out
        return dict(out)


def consistent_law(measure, N: int = 200, quad: QuadSpec | None = None,
                   gamma: float = 1.0) -> ConsistentLaw:
    return ConsistentLaw(measure, N, quad, gamma)


# ---------------------------------------------------------------------------
# the approximation family built from a dislocation measure


class HalvingLaw(SplitLaw):
    """Deterministic split n -> (ceil(n/2), floor(n/2)); q_1(empty) = 1."""

    name = "halving"
    model = "leaf"

    def __init__(self, gamma: float = 1.0):
        super().__init__(gamma)

    def table(self, n: int) -> dict[IntPartition, float]:
        if n < 1:
            raise ValueError("n must be positive")
        if n == 1:
            return {EMPTY: 1.0}
        return {IntPartition.from_parts(((n + 1) // 2, n // 2)): 1.0}


def _multinomial_shape(s: np.ndarray, n: int, rng: np.random.Generator) -> IntPartition:
    s = np.asarray(s, dtype=float)
    rest = max(0.0, 1.0 - s.sum())
    counts = rng.multinomial(n, np.append(s, rest) / (s.sum() + rest))
    dust = int(counts[-1])
    parts = [int(c) for c in counts[:-1] if c > 0] + [1] * dust
    return IntPartition.from_parts(parts)


class PropexempleLaw(SplitLaw):
    """Leaf-model law q~_n built from (gamma, nu) by thinning and paintbox allocation.

    For n >= n0 a split happens with probability
    w_n = n**-gamma * nu(1 - s_1 >= n**(-gamma/2)); the split draws s from the
    restricted measure and returns the shape of a multinomial allocation of
    n balls to the cells of s (which may still be (n)). Below n0 the law is
    deterministic halving.
    """

    name = "propexemple"
    model = "leaf"

    def __init__(self, measure, gamma: float, delta: Callable[[int], float] | None = None):
        super().__init__(gamma)
        self.measure = measure
        self.delta = delta or (lambda n: n ** (-self.gamma / 2.0))
        self._mass: dict[int, float] = {}
        self.n0 = self._find_n0()

    def restricted_mass(self, n: int) -> float:
        if n not in self._mass:
            self._mass[n] = float(self.measure.restricted_mass(self.delta(n)))
        return self._mass[n]

    def split_probability(self, n: int) -> float:
        """w_n; zero below n0."""
        if n < self.n0:
            return 0.0
        return n ** (-self.gamma) * self.restricted_mass(n)

    def nontrivial_given_split(self, n: int) -> float:
        """P(the multinomial allocation is not (n)) for a split at size n."""
        cache = self.__dict__.setdefault("_nontriv", {})
        if n not in cache:
            d = self.delta(n)
            val = self.measure.restricted_integral(
                d, lambda s: 1.0 - float(np.sum(np.asarray(s, dtype=float) ** n)))
            cache[n] = min(1.0, max(0.0, val / self.restricted_mass(n)))
        return cache[n]

    def trivial_mass(self, n: int) -> float:
        if n == 1 or n < self.n0:
            return 0.0
        return 1.0 - self.split_probability(n) * self.nontrivial_given_split(n)

    def sample_nontrivial(self, n: int, rng: np.random.Generator) -> IntPartition:
        if n < self.n0 or n == 1:
            return self.sample(n, rng)
        d = self.delta(n)
        while True:
            lam = _multinomial_shape(self.measure.sample_restricted(d, rng), n, rng)
            if lam.p > 1:
                return lam

    def _find_n0(self) -> int:
        moment = getattr(self.measure, "first_moment", None)
        c = float(moment() if moment else self.measure.integrate(lambda s: 1.0 - s[0]))
        start = max(2, math.ceil(c ** (2.0 / self.gamma) - 1e-12)) if c > 0 else 2
        n = start
        while True:
            if self.restricted_mass(n) > 0 and n ** (-self.gamma) * self.restricted_mass(n) <= 1:
                return n
            n += 1
            if n > 10**7:
                raise ValueError("restricted mass of nu stays zero")

    def sample(self, n: int, rng: np.random.Generator) -> IntPartition:
        if n < 1:
            raise ValueError("n must be positive")
        if n == 1:
            return EMPTY
        if n < self.n0:
            return IntPartition.from_parts(((n + 1) // 2, n // 2))
        if rng.random() >= self.split_probability(n):
            return IntPartition((n,))
        s = self.measure.sample_restricted(self.delta(n), rng)
        return _multinomial_shape(s, n, rng)

    def sample_many(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        if n < self.n0 or n == 1:
            return parts_matrix([self.sample(n, rng).parts for _ in range(size)])
        hit = rng.random(size) < self.split_probability(n)
        rows: list[tuple[int, ...]] = [(n,)] * size
        for i in np.nonzero(hit)[0]:
            s = self.measure.sample_restricted(self.delta(n), rng)
            rows[i] = _multinomial_shape(s, n, rng).parts
        return parts_matrix(rows)

    def table(self, n: int) -> dict[IntPartition, float]:
        if n == 1:
            return {EMPTY: 1.0}
        if n < self.n0:
            return {IntPartition.from_parts(((n + 1) // 2, n // 2)): 1.0}
        atoms = getattr(self.measure, "finite_atoms", None)
        if atoms is None:
            raise NotEnumerable("exact pmf needs a measure with finitely many atoms")
        w = n ** (-self.gamma)
        out: dict[IntPartition, float] = {}
        d = self.delta(n)
        for s, mass in atoms():
            if 1.0 - s[0] < d:
                continue
            for lam, pr in _multinomial_shape_law(tuple(s), n).items():
                out[lam] = out.get(lam, 0.0) + w * mass * pr
        triv = IntPartition((n,))
        out[triv] = 1.0 - sum(v for k, v in out.items() if k != triv)
        return out


def _multinomial_shape_law(s: tuple[float, ...], n: int) -> dict[IntPartition, float]:
    """Exact shape law of a multinomial allocation of n balls (finite s summing to 1)."""
    k = len(s)
    if k > 4 or n > 400:
        raise NotEnumerable("multinomial shape law too large")
    out: dict[IntPartition, float] = {}

    def rec(i, left, counts, logp):
        if i == k - 1:
            counts = counts + [left]
            lp = logp + (left * math.log(s[i]) if left else 0.0) - math.lgamma(left + 1)
            lam = IntPartition.from_parts(counts)
            out[lam] = out.get(lam, 0.0) + math.exp(lp + math.lgamma(n + 1))
            return
        for c in range(left + 1):
            if c and s[i] == 0:
                break
            rec(i + 1, left - c, counts + [c],
                logp + (c * math.log(s[i]) if c else 0.0) - math.lgamma(c + 1))

    rec(0, n, [], 0.0)
    return out


def propexemple_law(measure, gamma: float) -> PropexempleLaw:
    return PropexempleLaw(measure, gamma)


# ---------------------------------------------------------------------------
# ghost leaves


class CircLaw(SplitLaw):
    """Leaf-model law q°: q°_1(empty) = 1 and q°_{n+1}((lambda, 1)) = q_n(lambda)."""

    name = "circ"
    model = "leaf"

    def __init__(self, base: SplitLaw):
        if base.model != "vertex":
            raise ValueError("circ_transform expects a vertex-model law")
        super().__init__(base.gamma, base.ell)
        self.base = base
        self.name = f"circ({base.name})"

    @staticmethod
    def _add_one(lam: IntPartition) -> IntPartition:
        return IntPartition.from_parts(lam.parts + (1,))

    def table(self, n: int) -> dict[IntPartition, float]:
        if n == 1:
            return {EMPTY: 1.0}
        out = {}
        for lam, p in self.base.table(n - 1).items():
            key = self._add_one(lam)
            out[key] = out.get(key, 0.0) + p
        return out

    def sample(self, n: int, rng: np.random.Generator) -> IntPartition:
        if n == 1:
            return EMPTY
        return self._add_one(self.base.sample(n - 1, rng))

    def sample_many(self, n, size, rng):
        if n == 1:
            return np.zeros((size, 1), dtype=np.int64)
        base = self.base.sample_many(n - 1, size, rng)
        rows = np.concatenate([base, np.ones((size, 1), dtype=np.int64)], axis=1)
        return -np.sort(-rows, axis=1)


def circ_transform(q: SplitLaw) -> CircLaw:
    return CircLaw(q)


# ---------------------------------------------------------------------------
# the probe


@dataclass(frozen=True)
class ProbeResult:
    family: str
    n: int
    gamma: float
    estimate: float
    stderr: float
    mode: str

    def csv_row(self) -> list:
        return [self.family, self.n, self.gamma, repr(self.estimate), repr(self.stderr), self.mode]

    CSV_HEADER = ("family", "n", "gamma", "estimate", "stderr", "mode")


def _apply_f(f, rows: np.ndarray) -> np.ndarray:
    if f is None:
        return np.ones(rows.shape[0])
    return np.asarray(f(rows), dtype=float)


def probe_H(q: SplitLaw, f=None, n: int = 100, mode: str = "auto", reps: int = 100_000,
            rng: np.random.Generator | None = None) -> ProbeResult:
    """Evaluate a_n * E[(1 - lambda_1/n) f(lambda/n)] under q_n.

    ``mode`` is ``"exact"``, ``"mc"`` or ``"auto"`` (exact when q has an
    enumerable table at n).
    """
    if mode not in ("auto", "exact", "mc"):
        raise ValueError("mode must be auto, exact or mc")
    a_n = q.scale(n)
    if mode == "auto":
        mode = "exact" if q.has_exact(n) else "mc"
    if mode == "exact":
        tab = q.table(n)
        keys = [k for k in tab if not k.is_empty]
        if not keys:
            return ProbeResult(q.name, n, q.gamma, 0.0, 0.0, "exact")
        rows = parts_matrix([k.parts for k in keys]).astype(float) / n
        probs = np.array([tab[k] for k in keys])
        vals = (1.0 - rows[:, 0]) * _apply_f(f, rows)
        return ProbeResult(q.name, n, q.gamma, float(a_n * np.dot(probs, vals)), 0.0, "exact")
    rng = rng if rng is not None else np.random.default_rng()
    rows = q.sample_many(n, reps, rng).astype(float) / n
    vals = np.where(rows[:, 0] > 0, (1.0 - rows[:, 0]), 0.0) * _apply_f(f, rows)
    est = a_n * vals.mean()
    se = a_n * vals.std(ddof=1) / math.sqrt(reps) if reps > 1 else float("nan")
    return ProbeResult(q.name, n, q.gamma, float(est), float(se), "mc")


def size_biased_order(x, rng: np.random.Generator) -> np.ndarray:
    """Size-biased random reordering of a nonnegative sequence."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    left = list(x[x > 0])
    for i in range(len(left)):
        w = np.asarray(left)
        j = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
        j = min(j, len(left) - 1)
        out[i] = left.pop(j)
    return out


def size_biased_probe(q: GWLaw, g, n: int, reps: int, rng: np.random.Generator,
                      route: str = "reorder") -> tuple[float, float]:
    """Monte Carlo estimate and standard error of sqrt(n) * E[g(X*/n)] under q_n.

    ``route="reorder"`` draws lambda from q_n and size-biases its parts;
    ``route="composition"`` size-biases the plane-ordered composition
    (X_1, ..., X_p | tau_p = n). Both estimate the same quantity.
    """
    if route not in ("reorder", "composition"):
        raise ValueError("route must be reorder or composition")
    vals = np.empty(reps)
    for r in range(reps):
        parts = q.sample(n, rng).parts if route == "reorder" else q.sample_composition(n, rng)
        vals[r] = g(size_biased_order(parts, rng) / n)
    scale = math.sqrt(n)
    return float(scale * vals.mean()), float(scale * vals.std(ddof=1) / math.sqrt(reps))
