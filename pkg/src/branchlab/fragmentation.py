"""Dislocation measures, their integrals, and approximate fragmentation trees.

Binary measures are described by the density of s_1 on [1/2, 1). Integrals
use the substitution x = 1 - u**2, which tames the (1 - x)**(-3/2) growth
of the Brownian density near 1.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, interpolate

from .trees import EdgeTree
from .splitlaws import PropexempleLaw, QuadSpec

__all__ = [
    "MassPartition",
    "DislocationMeasure",
    "BinaryMeasure",
    "PointMeasure",
    "MixtureMeasure",
    "StableMeasure",
    "nu2",
    "nu_alpha_theta",
    "nu_alpha",
    "point_mass",
    "measure_from_json",
    "sample_restricted",
    "integrate_measure",
    "kappa",
    "approx_continuum_tree",
    "continuum_heights",
]

# grid size of the inverse-CDF tables used by binary samplers
CDF_GRID = 2**14


@dataclass(frozen=True)
class MassPartition:
    """A non-increasing sequence of masses with total at most 1."""

    entries: tuple[float, ...]

    def __post_init__(self):
        e = tuple(float(x) for x in self.entries)
        if any(x < 0 for x in e):
            raise ValueError("masses must be nonnegative")
        if any(e[i] < e[i + 1] for i in range(len(e) - 1)):
            raise ValueError("masses must be non-increasing")
        if sum(e) > 1 + 1e-12:
            raise ValueError(f"masses sum to {sum(e)!r} > 1")
        object.__setattr__(self, "entries", e)

    @classmethod
    def of(cls, values) -> "MassPartition":
        return cls(tuple(sorted((float(v) for v in values), reverse=True)))

    @property
    def s1(self) -> float:
        return self.entries[0] if self.entries else 0.0

    def total(self) -> float:
        return float(sum(self.entries))

    def is_conservative(self, tol: float = 1e-9) -> bool:
        return abs(self.total() - 1.0) <= tol

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


class DislocationMeasure:
    """Common interface of the measures used by the samplers."""

    kind = "abstract"

    def restricted_mass(self, delta: float) -> float:
        """nu(1 - s_1 >= delta)."""
        raise NotImplementedError

    def sample_restricted(self, delta: float, rng: np.random.Generator) -> MassPartition:
        raise NotImplementedError

    def integrate(self, f: Callable[[np.ndarray], float], tol: float = 1e-10) -> float:
        raise NotImplementedError

    def restricted_integral(self, delta: float, f: Callable[[np.ndarray], float]) -> float:
        """Integral of f over {1 - s_1 >= delta}."""
        raise NotImplementedError

    def first_moment(self) -> float:
        """Integral of 1 - s_1, written as the tail sum to avoid cancellation near s_1 = 1."""
        return self.integrate(lambda s: float(np.sum(np.asarray(s)[1:])))


class BinaryMeasure(DislocationMeasure):
    """Binary measure nu(s_1 in dx) = density(x) dx on [1/2, upper).

    ``density`` takes (x, y) with y = 1 - x passed separately so that the
    singular end can be evaluated without cancellation.
    """

    kind = "binary"

    def __init__(self, density: Callable[[float], float], name: str = "binary",
                 upper: float | None = None, quad: QuadSpec | None = None, **params):
        self._density = density
        self.name = name
        self.upper = upper
        self.quad = quad or QuadSpec()
        self.params = params
        self.atoms = ()
        self._mass_cache: dict[float, float] = {}
        self._table = None  # (delta, u grid, cdf)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, 0.5, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where((x >= 0.5) & (x < 1.0), self._density(xc, 1.0 - xc), 0.0)
        if self.upper is not None:
            out = np.where(x < self.upper, out, 0.0)
        return out if out.ndim else float(out)

    # integrals in the u = sqrt(1 - x) variable
    def _u_bounds(self, delta: float = 0.0) -> tuple[float, float]:
        lo = math.sqrt(max(delta, 0.0))
        if self.upper is not None:
            lo = max(lo, math.sqrt(1.0 - self.upper))
        return lo, math.sqrt(0.5)

    def _quad_u(self, h: Callable[[float], float], lo: float, hi: float, tol: float) -> tuple[float, float]:
        def g(u):
            y = u * u
            x = 1.0 - y
            return float(self._density(x, y)) * 2.0 * u * h(x, y)

        if hi <= lo:
            return 0.0, 0.0
        # the integrand is steepest near u = 0; split there for robustness
        pts = [p for p in (1e-6, 1e-4, 1e-2) if lo < p < hi]
        with warnings.catch_warnings():
            # convergence is judged from the returned error estimate instead
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(g, lo, hi, epsabs=tol, epsrel=tol, limit=400,
                                      points=pts or None)
        return val, err

    def integrate(self, f, tol: float = 1e-10) -> float:
        val, err = self._quad_u(lambda x, y: f(np.array([x, y])), *self._u_bounds(), tol)
        if not np.isfinite(val):
            raise ArithmeticError("integral did not converge")
        return val

    def integrate_with_error(self, f, tol: float = 1e-10) -> tuple[float, float]:
        return self._quad_u(lambda x, y: f(np.array([x, y])), *self._u_bounds(), tol)

    def integrate_binary(self, h: Callable[[float], float], tol: float = 1e-10) -> float:
        """Integral of h(s_1) over the support (upper cut included)."""
        val, err = self._quad_u(lambda x, y: h(x), *self._u_bounds(), tol)
        if not np.isfinite(val) or err > max(1e3 * tol, 1e-6 * abs(val)):
            raise ArithmeticError(f"quadrature did not converge (err {err:.3g})")
        return val

    def restricted_integral(self, delta, f):
        lo, hi = self._u_bounds(delta)
        return self._quad_u(lambda x, y: f(np.array([x, y])), lo, hi, self.quad.tol)[0]

    def restricted_mass(self, delta: float) -> float:
        if delta > 0.5:
            return 0.0
        if delta not in self._mass_cache:
            lo, hi = self._u_bounds(delta)
            self._mass_cache[delta] = self._quad_u(lambda x, y: 1.0, lo, hi, 1e-12)[0]
        return self._mass_cache[delta]

    def _ensure_table(self, delta: float):
        if self._table is not None and self._table[0] <= delta:
            return self._table
        lo, hi = self._u_bounds(delta)
        if hi <= lo:
            raise ValueError("zero restricted mass")
        # log-spaced in u so the steep end near u = lo is resolved
        u = np.geomspace(lo, hi, CDF_GRID + 1)
        nodes, weights = np.polynomial.legendre.leggauss(8)
        a, b = u[:-1, None], u[1:, None]
        uu = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
        gx = self._density(1.0 - uu * uu, uu * uu) * 2.0 * uu
        cell = (0.5 * (b - a)[:, 0]) * (gx * weights[None, :]).sum(axis=1)
        cdf = np.concatenate([[0.0], np.cumsum(cell)])
        # cdf runs from u = lo (x near 1) to u = hi (x = 1/2)
        inv = interpolate.PchipInterpolator(cdf, u)
        self._table = (delta, u, cdf, inv)
        return self._table

    def cdf_u(self, delta: float):
        """(u grid, cumulative mass from u = sqrt(delta)) of the master table."""
        _, u, cdf, _ = self._ensure_table(delta)
        return u, cdf

    def sample_s1(self, delta: float, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws of s_1 under nu restricted to {1 - s_1 >= delta}."""
        if self.restricted_mass(delta) <= 0:
            raise ValueError("zero restricted mass")
        d0, u, cdf, inv = self._ensure_table(delta)
        # mass between sqrt(d0) and sqrt(delta) is excluded by shifting the base
        lo_u = self._u_bounds(delta)[0]
        base = float(np.interp(lo_u, u, cdf)) if delta > d0 else 0.0
        v = base + rng.random(size) * (cdf[-1] - base)
        uu = np.clip(inv(v), lo_u, u[-1])
        return 1.0 - uu * uu

    def sample_restricted(self, delta, rng):
        x = float(self.sample_s1(delta, 1, rng)[0])
        x = max(x, 0.5)
        return MassPartition((x, 1.0 - x))

    def to_json(self) -> dict:
        return {"kind": self.name, **self.params}


class PointMeasure(DislocationMeasure):
    """A finite measure w * delta_s at one mass partition s."""

    kind = "point"

    def __init__(self, s: Sequence[float], weight: float = 1.0):
        mp = MassPartition.of(s)
        if not mp.is_conservative(1e-12):
            raise ValueError("point masses must be conservative")
        if mp.s1 >= 1.0:
            raise ValueError("the trivial partition (1, 0, ...) carries no mass")
        self.s = mp
        self.weight = float(weight)
        self.atoms = ((mp.s1, self.weight),) if len(mp) == 2 else ()
        self.density = None
        self.name = "point"

    def finite_atoms(self):
        return [(self.s.entries, self.weight)]

    def restricted_mass(self, delta):
        return self.weight if 1.0 - self.s.s1 >= delta else 0.0

    def sample_restricted(self, delta, rng):
        if self.restricted_mass(delta) <= 0:
            raise ValueError("zero restricted mass")
        return self.s

    def integrate(self, f, tol=1e-10):
        return self.weight * float(f(np.asarray(self.s.entries)))

    def restricted_integral(self, delta, f):
        return self.integrate(f) if 1.0 - self.s.s1 >= delta else 0.0

    def to_json(self):
        return {"kind": "point", "s": list(self.s.entries)}


class MixtureMeasure(DislocationMeasure):
    """Sum of finitely many measures."""

    kind = "mixture"

    def __init__(self, parts: Sequence[DislocationMeasure]):
        if not parts:
            raise ValueError("empty mixture")
        self.parts = list(parts)
        self.name = "mixture"

    def finite_atoms(self):
        out = []
        for p in self.parts:
            fa = getattr(p, "finite_atoms", None)
            if fa is None:
                raise AttributeError("not all components are atomic")
            out.extend(fa())
        return out

    def restricted_mass(self, delta):
        return sum(p.restricted_mass(delta) for p in self.parts)

    def sample_restricted(self, delta, rng):
        w = np.array([p.restricted_mass(delta) for p in self.parts])
        if w.sum() <= 0:
            raise ValueError("zero restricted mass")
        i = int(rng.choice(len(w), p=w / w.sum()))
        return self.parts[i].sample_restricted(delta, rng)

    def integrate(self, f, tol=1e-10):
        return sum(p.integrate(f, tol) for p in self.parts)

    def restricted_integral(self, delta, f):
        return sum(p.restricted_integral(delta, f) for p in self.parts)

    def to_json(self):
        return {"kind": "mixture", "parts": [p.to_json() for p in self.parts]}


class StableMeasure(DislocationMeasure):
    """The measure nu_alpha, alpha in (1, 2), available through its integral only.

    Atoms Delta_i of a Poisson measure with intensity
    c * x**(-1 - 1/alpha) dx, c = 1 / (alpha * Gamma(1 - 1/alpha)), are
    simulated above a cutoff ``eps``; T is their sum.
    """

    kind = "stable"

    def __init__(self, alpha: float):
        if not 1.0 < alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        self.alpha = float(alpha)
        self.beta = 1.0 / self.alpha
        self.c = 1.0 / (self.alpha * math.gamma(1.0 - self.beta))
        self.const = self.alpha**2 * math.gamma(2.0 - self.beta) / math.gamma(2.0 - self.alpha)
        self.name = "stable"

    def missing_mass(self, eps: float) -> float:
        """Expected total size of the atoms below eps."""
        return self.c * eps ** (1.0 - self.beta) / (1.0 - self.beta)

    def sample_atoms(self, rng: np.random.Generator, eps: float = 1e-6) -> np.ndarray:
        """Atoms above eps in non-increasing order."""
        mean = self.c * eps ** (-self.beta) / self.beta
        k = rng.poisson(mean)
        atoms = eps * rng.random(k) ** (-1.0 / self.beta)
        return np.sort(atoms)[::-1]

    def sample_T(self, rng, eps: float = 1e-6, compensate: bool = True) -> float:
        t = float(self.sample_atoms(rng, eps).sum())
        return t + (self.missing_mass(eps) if compensate else 0.0)

    def sample_partition(self, rng, eps: float = 1e-6) -> tuple[MassPartition, float]:
        """(Delta_i / T, T) using the truncated atoms; the masses sum to 1."""
        a = self.sample_atoms(rng, eps)
        while a.size == 0:
            a = self.sample_atoms(rng, eps)
        t = float(a.sum())
        return MassPartition(tuple(a / t)), t

    def integrate_mc(self, f, reps: int, rng, eps: float = 1e-6) -> tuple[float, float]:
        """Monte Carlo estimate and standard error of the integral of f."""
        vals = np.empty(reps)
        for i in range(reps):
            s, t = self.sample_partition(rng, eps)
            vals[i] = t * f(np.asarray(s.entries))
        return self.const * float(vals.mean()), self.const * float(vals.std(ddof=1) / math.sqrt(reps))

    def integrate(self, f, tol=1e-2, rng=None, reps: int = 20_000, eps: float = 1e-6):
        rng = rng if rng is not None else np.random.default_rng(0)
        return self.integrate_mc(f, reps, rng, eps)[0]

    def restricted_mass(self, delta):
        raise NotImplementedError("nu_alpha supports integration only")

    def sample_restricted(self, delta, rng):
        raise NotImplementedError("nu_alpha has no conditioned sampler")

    def to_json(self):
        return {"kind": "stable", "alpha": self.alpha}


def _nu2_density(x, y):
    return np.sqrt(2.0 / (np.pi * x**3 * y**3))


def nu2(upper: float | None = None) -> BinaryMeasure:
    """The Brownian dislocation measure (optionally cut at s_1 < upper)."""
    return BinaryMeasure(_nu2_density, name="nu2", upper=upper)


def nu_alpha_theta(alpha: float, theta: float) -> BinaryMeasure:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not theta >= 0.0:
        raise ValueError("theta must be nonnegative")
    g = math.gamma(1.0 - alpha)

    def dens(x, y):
        a = (alpha * y + theta * x) * x ** (-alpha - 1.0) * y ** (theta - 1.0)
        b = (alpha * x + theta * y) * y ** (-alpha - 1.0) * x ** (theta - 1.0)
        return (a + b) / g

    return BinaryMeasure(dens, name="alpha_theta", alpha=alpha, theta=theta)


def nu_alpha(alpha: float) -> StableMeasure:
    return StableMeasure(alpha)


def point_mass(s: Sequence[float], weight: float = 1.0) -> PointMeasure:
    return PointMeasure(s, weight)


def measure_from_json(spec) -> DislocationMeasure:
    """Build a measure from its JSON description."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise KeyError("kind")
    kind = spec["kind"]
    if kind == "nu2":
        return nu2(spec.get("upper"))
    if kind == "alpha_theta":
        for key in ("alpha", "theta"):
            if key not in spec:
                raise KeyError(key)
        return nu_alpha_theta(float(spec["alpha"]), float(spec["theta"]))
    if kind == "point":
        if "s" not in spec:
            raise KeyError("s")
        return point_mass(spec["s"], float(spec.get("weight", 1.0)))
    if kind == "stable":
        if "alpha" not in spec:
            raise KeyError("alpha")
        return nu_alpha(float(spec["alpha"]))
    if kind == "mixture":
        return MixtureMeasure([measure_from_json(p) for p in spec["parts"]])
    raise KeyError("kind")


def sample_restricted(nu: DislocationMeasure, delta: float, rng) -> tuple[MassPartition, float]:
    """A draw from nu conditioned on {1 - s_1 >= delta}, and that set's mass."""
    if not 0.0 < delta < 0.5 + 1e-12:
        raise ValueError("delta must lie in (0, 1/2]")
    mass = nu.restricted_mass(delta)
    if mass <= 0:
        raise ValueError("zero restricted mass")
    return nu.sample_restricted(delta, rng), mass


def integrate_measure(nu: DislocationMeasure, f, tol: float = 1e-10, c: float | None = 1.0,
                      check_points: int = 64) -> float:
    """Integral of f against nu, for f with |f(s)| <= c * (1 - s_1).

    The declared bound is spot-checked on binary test points; pass
    ``c=None`` to skip the check.
    """
    if c is not None:
        xs = np.linspace(0.5, 1.0 - 1e-6, check_points)
        for x in xs:
            v = abs(float(f(np.array([x, 1.0 - x]))))
            if v > c * (1.0 - x) * (1 + 1e-9) + 1e-15:
                raise ValueError("f violates the declared bound |f| <= c (1 - s_1)")
    return nu.integrate(f, tol)


def kappa(nu: DislocationMeasure, k: int, tol: float = 1e-10) -> float:
    """Integral of 1 - sum_i s_i**k, the rate at which [k] is split."""
    if isinstance(nu, BinaryMeasure):
        # 1 - x**k - y**k with y = 1 - x, free of cancellation when y is tiny
        return nu.integrate(lambda s: float(-np.expm1(k * np.log1p(-s[1])) - s[1] ** k), tol)
    return nu.integrate(lambda s: 1.0 - float(np.sum(np.asarray(s) ** k)), tol)


# ---------------------------------------------------------------------------
# approximate continuum trees


def _nontrivial_prob(law: PropexempleLaw, k: int, cache: dict) -> float:
    """P(a split at size k is not (k)) given that a split was attempted."""
    return law.nontrivial_given_split(k)


def _split_nontrivial(law: PropexempleLaw, k: int, rng) -> list[int]:
    return list(law.sample_nontrivial(k, rng).parts)


def _hold_and_split(law: PropexempleLaw, k: int, rng, cache: dict) -> tuple[int, list[int]]:
    """Number of trivial steps before the first real split, and that split."""
    if k < law.n0:
        return 0, [(k + 1) // 2, k // 2]
    p = law.split_probability(k) * _nontrivial_prob(law, k, cache)
    g = int(rng.geometric(p)) - 1
    return g, _split_nontrivial(law, k, rng)


def approx_continuum_tree(nu: DislocationMeasure, gamma: float, n: int, rng,
                          law: PropexempleLaw | None = None) -> EdgeTree:
    """A leaf-model tree with n leaves under the approximating family, edges n**-gamma.

    Runs of trivial splits are merged into single longer edges, which leaves
    the metric tree unchanged.
    """
    law = law or PropexempleLaw(nu, gamma)
    if n < law.n0:
        raise ValueError(f"n = {n} is below n0 = {law.n0}")
    unit = n ** (-law.gamma)
    cache: dict = {}
    # explicit stack: (size, edge count above this subtree's top vertex, slot)
    built: dict[int, EdgeTree] = {}
    pending: list[tuple[int, int, int, list[int] | None]] = [(n, 1, 0, None)]
    next_id = 1
    order: list[tuple[int, int, list[int]]] = []
    while pending:
        size, edges, ident, _ = pending.pop()
        if size == 1:
            built[ident] = EdgeTree(edges * unit)
            continue
        g, parts = _hold_and_split(law, size, rng, cache)
        kids = []
        for part in parts:
            kids.append(next_id)
            pending.append((part, 1, next_id, None))
            next_id += 1
        order.append((ident, edges + g, kids))
    for ident, edges, kids in reversed(order):
        built[ident] = EdgeTree(edges * unit, tuple(built[c] for c in kids))
    return built[0]


def continuum_heights(nu: DislocationMeasure, gamma: float, n: int, reps: int, rng,
                      chunk: int = 256, law: PropexempleLaw | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Heights and uniform-leaf depths of ``reps`` approximate trees, rescaled by n**-gamma.

    Same law as :func:`approx_continuum_tree` (height includes the planted
    edge) but simulated level by level across replicates.
    """
    law = law or PropexempleLaw(nu, gamma)
    if n < law.n0:
        raise ValueError(f"n = {n} is below n0 = {law.n0}")
    cache: dict = {}
    # extra height below a node handled by deterministic halving
    n0 = law.n0
    tail = np.zeros(max(n0, 2) + 1, dtype=np.int64)
    for k in range(2, n0 + 1):
        tail[k] = 1 + tail[(k + 1) // 2]
    heights = np.zeros(reps)
    marked = np.zeros(reps)
    binary = isinstance(nu, BinaryMeasure) or (isinstance(nu, PointMeasure) and len(nu.s) == 2)
    for start in range(0, reps, chunk):
        r = np.arange(start, min(reps, start + chunk))
        rep = r.copy()
        size = np.full(r.size, n, dtype=np.int64)
        depth = np.ones(r.size, dtype=np.int64)
        mark = np.ones(r.size, dtype=bool)
        hmax = np.zeros(reps, dtype=np.int64)
        while rep.size:
            small = size < n0
            if small.any():
                d_end = depth[small] + tail[size[small]]
                np.maximum.at(hmax, rep[small], d_end)
                ms = small & mark
                if ms.any():
                    # uniform leaf inside a halving subtree
                    for i in np.nonzero(ms)[0]:
                        marked[rep[i]] = depth[i] + _halving_leaf_depth(int(size[i]), rng)
                rep, size, depth, mark = rep[~small], size[~small], depth[~small], mark[~small]
                if not rep.size:
                    break
            uniq, inv = np.unique(size, return_inverse=True)
            p = np.array([law.split_probability(int(k)) * _nontrivial_prob(law, int(k), cache)
                          for k in uniq])
            g = rng.geometric(p[inv]) - 1
            if binary:
                left = _binary_splits(law, size, rng)
                right = size - left
                # a uniform leaf falls left with probability left / size
                go_left = rng.random(size.size) * size < left
                new_rep = np.concatenate([rep, rep])
                new_size = np.concatenate([left, right])
                new_depth = np.concatenate([depth + g + 1, depth + g + 1])
                new_mark = np.concatenate([mark & go_left, mark & ~go_left])
            else:
                nr, ns, nd, nm = [], [], [], []
                for i in range(size.size):
                    parts = _split_nontrivial(law, int(size[i]), rng)
                    pick = _pick_by_size(parts, rng) if mark[i] else -1
                    for j, part in enumerate(parts):
                        nr.append(rep[i]); ns.append(part); nd.append(depth[i] + g[i] + 1)
                        nm.append(j == pick)
                new_rep, new_size = np.array(nr), np.array(ns, dtype=np.int64)
                new_depth, new_mark = np.array(nd, dtype=np.int64), np.array(nm, dtype=bool)
            leaf = new_size == 1
            if leaf.any():
                np.maximum.at(hmax, new_rep[leaf], new_depth[leaf])
                ml = leaf & new_mark
                marked[new_rep[ml]] = new_depth[ml]
            keep = ~leaf
            rep, size, depth, mark = new_rep[keep], new_size[keep], new_depth[keep], new_mark[keep]
        heights[r] = hmax[r]
    unit = n ** (-law.gamma)
    return heights * unit, marked * unit


def _pick_by_size(parts: list[int], rng) -> int:
    u = rng.integers(sum(parts))
    for j, p in enumerate(parts):
        if u < p:
            return j
        u -= p
    return len(parts) - 1


def _halving_leaf_depth(k: int, rng) -> int:
    d = 0
    while k > 1:
        a = (k + 1) // 2
        k = a if rng.integers(k) < a else k - a
        d += 1
    return d


def _binary_splits(law: PropexempleLaw, size: np.ndarray, rng) -> np.ndarray:
    """Nontrivial binomial allocations for binary measures, one per node."""
    nu = law.measure
    out = np.zeros(size.size, dtype=np.int64)
    todo = np.arange(size.size)
    while todo.size:
        k = size[todo]
        if isinstance(nu, PointMeasure):
            s1 = np.full(todo.size, nu.s.s1)
        else:
            # restricted draws need per-size deltas; shift a shared master table
            s1 = np.empty(todo.size)
            for kk in np.unique(k):
                sel = k == kk
                s1[sel] = nu.sample_s1(law.delta(int(kk)), int(sel.sum()), rng)
        c = rng.binomial(k, s1)
        ok = (c > 0) & (c < k)
        out[todo[ok]] = c[ok]
        todo = todo[~ok]
    return out
