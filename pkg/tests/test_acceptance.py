"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are printed in the terminal summary (see conftest.py) and also
immediately when run with ``-s``.
"""

import math
from collections import Counter

import numpy as np
import pytest
from scipy import integrate

from branchlab.fragmentation import continuum_heights, point_mass
from branchlab.partitions import IntPartition, enumerate_partitions, iter_partitions, shape_count
from branchlab.polya import (
    constants,
    natural_coupling,
    otter_counts,
    rank_tree,
    shape_count_poly,
    uniform_law,
    uniform_tree,
    uniform_vertex_depths,
    unrank_tree,
)
from branchlab.samplers import alpha_theta_root_splits, exact_Q_law, gw_uniform_vertex_depths
from branchlab.splitlaws import OffspringLaw, alpha_theta_law, gw_law, probe_H, propexemple_law
from branchlab.stats import chi_square_gof, empirical_pmf, ks_two_sample, tv_distance
from branchlab.trees import enumerate_trees

from conftest import ACCEPTANCE_KEY
from oracles import bell_triangle, canon, gw_conditioned_law, gw_size_series, set_partitions

INF = math.inf


@pytest.fixture
def report(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def emit(number, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{name} [{'ok' if passed else 'FAIL'}]" for name, passed in checks)
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return emit


def _to_oracle(t):
    return canon(tuple(_to_oracle(k) for k in t.kids))


def test_criterion_01_counting(report):
    checks = []
    for n in range(1, 9):
        brute = Counter(tuple(sorted((len(b) for b in p), reverse=True))
                        for p in set_partitions(range(n)))
        lams = enumerate_partitions(n)
        exact = all(shape_count(lam) == brute[lam.parts] for lam in lams) and len(brute) == len(lams)
        bell = sum(shape_count(lam) for lam in lams) == bell_triangle(n)
        checks.append((f"n={n} counts={'exact' if exact else 'mismatch'} bell={bell}", exact and bell))
    report(1, checks)


def test_criterion_02_galton_watson(report):
    checks = []
    cases = {
        "binary": (OffspringLaw.binary(), lambda k: 0.5 if k in (0, 2) else 0.0),
        "poisson": (OffspringLaw.poisson(), None),
    }
    for name, (xi, f) in cases.items():
        if f is None:
            f = lambda k, p=xi.pmf: p[k] if k < len(p) else 0.0
        q = gw_law(xi, 32)
        worst = 0.0
        # a binary tree has an odd number of vertices; even sizes are null events
        for n in (range(1, 8, 2) if name == "binary" else range(1, 8)):
            got = {_to_oracle(t): p for t, p in exact_Q_law(q, n).items()}
            worst = max(worst, tv_distance(got, gw_conditioned_law(f, n)))
        checks.append((f"{name} max TV={worst:.2e} (<=1e-12)", worst <= 1e-12))
        series = gw_size_series(xi.pmf, 12)
        step = np.array(xi.pmf)
        conv = np.array([1.0])
        gap = 0.0
        for n in range(1, 13):
            conv = np.convolve(conv, step)
            walk = conv[n - 1]  # P(S_n = -1) = P(sum of n offspring = n - 1)
            gap = max(gap, abs(n * series[n] - walk), abs(n * q.size_prob(n) - walk))
        checks.append((f"{name} cyclic gap={gap:.1e} (<=1e-14)", gap <= 1e-14))
    report(2, checks)


def test_criterion_03_otter_tables(report):
    checks = []
    for m in (INF, 2):
        T = otter_counts(m, 10).T
        same = all(T[n] == len(enumerate_trees(n, None if m == INF else m)) for n in range(1, 11))
        checks.append((f"m={m} counts vs enumeration", same))
    t = otter_counts(INF, 41)
    sums = all(sum(shape_count_poly(t, n + 1, IntPartition(p)) for p in iter_partitions(n)) == t.T[n + 1]
               for n in range(1, 41))
    checks.append(("split sums n<=40", sums))
    c300 = constants(otter_counts(INF, 300))
    c400 = constants(otter_counts(INF, 400))
    stable = f"{c300.rho:.4g}" == f"{c400.rho:.4g}" and abs(c300.rho / c400.rho - 1) < 5e-4
    checks.append((f"rho {c300.rho:.7f} vs {c400.rho:.7f}", stable))
    gap = abs(c400.psi_partial - 1)
    checks.append((f"|psi-1|={gap:.2e} < tail {c400.psi_tail:.2e}+1e-3", gap < c400.psi_tail + 1e-3))
    report(3, checks)


def test_criterion_04_uniform_generation(report):
    rng = np.random.default_rng(4)
    t = otter_counts(INF, 10)
    trees = enumerate_trees(7)
    counts = Counter(uniform_tree(t, 7, rng) for _ in range(100_000))
    _, p = chi_square_gof([counts[x] for x in trees], [1 / len(trees)] * len(trees))
    checks = [(f"48 trees chi2 p={p:.3g} (>0.001)", len(trees) == 48 and p > 0.001)]
    for m in (INF, 2):
        tm = otter_counts(m, 8)
        ok = all(rank_tree(tm, unrank_tree(tm, n, r)) == r
                 for n in range(1, 9) for r in range(tm.T[n]))
        checks.append((f"m={m} rank/unrank n<=8", ok))
    report(4, checks)


def test_criterion_05_coupling(report):
    rng = np.random.default_rng(5)
    t = otter_counts(INF, 400)
    law = {k: float(v) for k, v in exact_Q_law(uniform_law(t), 6).items()}
    draws = [natural_coupling(t, uniform_tree(t, 6, rng), rng).coupled for _ in range(100_000)]
    tv = tv_distance(empirical_pmf(draws), law)
    checks = [(f"marginal TV={tv:.4f} (<=0.01)", tv <= 0.01)]
    bad = 0
    for _ in range(100_000):
        a = uniform_tree(t, 50, rng)
        out = natural_coupling(t, a, rng)
        bad += abs(out.coupled.height - a.height) > 2 * out.jstar
    checks.append((f"height bound violations={bad}/100000", bad == 0))
    n = 200
    big = sum(natural_coupling(t, uniform_tree(t, n, rng), rng).jstar >= n**0.6 for _ in range(10_000))
    checks.append((f"freq(j*>=n^0.6)={big / 10_000:.1e} (<1e-3)", big / 10_000 < 1e-3))
    report(5, checks)


def _gw_target():
    g = lambda x: min(x, 1 - x) * x**-0.5 * (1 - x) ** -1.5
    a, _ = integrate.quad(g, 0, 0.5, epsabs=1e-12, epsrel=1e-12)
    b, _ = integrate.quad(g, 0.5, 1, epsabs=1e-12, epsrel=1e-12)
    return (a + b) / math.sqrt(2 * math.pi)


def test_criterion_06_gw_probe(report):
    target = _gw_target()
    q = gw_law(OffspringLaw.binary(), 4000)
    errs = [abs(probe_H(q, None, n, mode="exact").estimate / target - 1) for n in (200, 800, 3200)]
    checks = [(f"target={target:.10f}", abs(target - 0.7978845608) < 1e-8),
              ("rel errors " + ", ".join(f"{e:.4f}" for e in errs) + " decreasing",
               errs[0] > errs[1] > errs[2]),
              (f"n=3200 error {errs[2]:.4f} < 0.15", errs[2] < 0.15)]
    report(6, checks)


def test_criterion_07_polya_probe(report):
    rng = np.random.default_rng(7)
    t = otter_counts(INF, 400)
    c = constants(t)
    # the integral of x^-1.5 (1-x)^-0.5 over [1/2, 1] is 2
    tail, _ = integrate.quad(lambda x: x**-1.5 * (1 - x) ** -0.5, 0.5, 1)
    target = c.kappa * c.psi_partial * tail
    q = uniform_law(t)
    errs = [abs(probe_H(q, None, n, mode="mc", reps=100_000, rng=rng).estimate / target - 1)
            for n in (500, 2000)]
    checks = [(f"target={target:.6f}", True),
              (f"rel errors {errs[0]:.4f}, {errs[1]:.4f} within 0.20", max(errs) <= 0.20),
              ("n=2000 error <= n=500 error", errs[1] <= errs[0])]
    report(7, checks)


def test_criterion_08_cross_model_scaling(report):
    rng = np.random.default_rng(8)
    xi = OffspringLaw.binary()
    t2 = otter_counts(2, 400)
    c2 = constants(t2).c_m
    reps = 10_000
    samples = {}
    # binary trees need an odd number of vertices
    for n in (2001, 8001):
        gw = gw_uniform_vertex_depths(xi, n, reps, rng) * xi.sigma / (2 * math.sqrt(n))
        uni = uniform_vertex_depths(t2, n, reps, rng) / (c2 * math.sqrt(n))
        samples[n] = (gw, uni)
    cross = ks_two_sample(*samples[2001])[0]
    gw_stab = ks_two_sample(samples[2001][0], samples[8001][0])[0]
    uni_stab = ks_two_sample(samples[2001][1], samples[8001][1])[0]
    checks = [(f"GW vs uniform KS={cross:.4f} (<0.1)", cross < 0.1),
              (f"GW n vs 4n KS={gw_stab:.4f} (<0.05)", gw_stab < 0.05),
              (f"uniform n vs 4n KS={uni_stab:.4f} (<0.05)", uni_stab < 0.05)]
    report(8, checks)


def _alpha_theta_density(x, a, th):
    y = 1 - x
    return ((a * y + th * x) * x ** (-a - 1) * y ** (th - 1)
            + (a * x + th * y) * y ** (-a - 1) * x ** (th - 1)) / math.gamma(1 - a)


def test_criterion_09_alpha_theta(report):
    rng = np.random.default_rng(9)
    q = alpha_theta_law(0.5, 0.5)
    counts = alpha_theta_root_splits(0.5, 0.5, 8, 100_000, rng)
    tab = q.table(8)
    keys = list(tab)
    _, p = chi_square_gof([counts.get(k, 0) for k in keys], [tab[k] for k in keys])
    checks = [(f"root splits chi2 p={p:.3g} (>0.001)",
               p > 0.001 and set(counts) <= set(keys))]
    target, _ = integrate.quad(lambda x: (1 - x) * _alpha_theta_density(x, 0.5, 0.5), 0.5, 1,
                               epsabs=1e-12, epsrel=1e-12)
    errs = [abs(probe_H(q, None, n, mode="exact").estimate / target - 1) for n in (50, 200, 800)]
    checks.append((f"target={target:.10f}; rel errors " + ", ".join(f"{e:.5f}" for e in errs),
                   errs[0] > errs[1] > errs[2]))
    report(9, checks)


def test_criterion_10_propexemple(report):
    rng = np.random.default_rng(10)
    nu = point_mass([0.5, 0.5])
    law = propexemple_law(nu, 1.0)
    target = (1 - 0.5) * 1.0
    res = probe_H(law, None, 1000, mode="mc", reps=1_000_000, rng=rng)
    checks = [(f"probe {res.estimate:.4f} +- {res.stderr:.4f} vs {target}",
               abs(res.estimate - target) <= 3 * res.stderr)]
    h10, _ = continuum_heights(nu, 1.0, 2**10, 10_000, rng, law=law)
    h12, _ = continuum_heights(nu, 1.0, 2**12, 10_000, rng, law=law)
    ks = ks_two_sample(h10, h12)[0]
    checks.append((f"height KS 2^10 vs 2^12 = {ks:.4f} (<0.05)", ks < 0.05))
    report(10, checks)
