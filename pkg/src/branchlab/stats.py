"""Goodness-of-fit and distance helpers shared by the test-suite and the CLI."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

__all__ = [
    "SampleSummary",
    "summarize",
    "ks_two_sample",
    "chi_square_gof",
    "tv_distance",
    "empirical_pmf",
    "result_rows_csv",
]


@dataclass(frozen=True)
class SampleSummary:
    count: int
    mean: float
    variance: float
    moments: tuple[float, float, float]  # central moments of order 2, 3, 4
    ci_low: float
    ci_high: float


def summarize(x, rng: np.random.Generator | None = None, n_boot: int = 1000) -> SampleSummary:
    """Mean, variance, central moments and a percentile-bootstrap 95% CI for the mean."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    rng = rng or np.random.default_rng(0)
    mean = float(x.mean())
    c = x - mean
    moments = tuple(float(np.mean(c**k)) for k in (2, 3, 4))
    boots = rng.choice(x, size=(n_boot, x.size), replace=True).mean(axis=1)
    lo, hi = np.quantile(boots, [0.025, 0.975])
    # percentile intervals can miss the point estimate on tiny samples
    lo, hi = min(lo, mean), max(hi, mean)
    return SampleSummary(x.size, mean, float(x.var(ddof=1)) if x.size > 1 else 0.0,
                         moments, float(lo), float(hi))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    res = sps.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def chi_square_gof(observed, expected, min_expected: float = 5.0) -> tuple[float, float]:
    """Pearson chi-square test of counts against probabilities.

    Bins whose expected count falls below ``min_expected`` are merged, smallest
    first, into a pooled bin. Degrees of freedom are bins - 1.
    """
    obs = np.asarray(observed, dtype=float)
    exp_p = np.asarray(expected, dtype=float)
    if obs.shape != exp_p.shape:
        raise ValueError("observed and expected must have the same length")
    if abs(exp_p.sum() - 1.0) > 1e-9:
        raise ValueError(f"expected probabilities sum to {exp_p.sum()!r}")
    total = obs.sum()
    exp = exp_p * total
    if np.any((exp == 0) & (obs > 0)):
        return float("inf"), 0.0
    keep = exp >= min_expected
    o = list(obs[keep])
    e = list(exp[keep])
    if (~keep).any():
        po, pe = obs[~keep].sum(), exp[~keep].sum()
        if pe >= min_expected or not e:
            o.append(po)
            e.append(pe)
        else:
            # fold the leftovers into the smallest kept bin
            i = int(np.argmin(e))
            o[i] += po
            e[i] += pe
    if len(e) < 2:
        raise ValueError("degenerate binning: fewer than two usable bins")
    o = np.array(o)
    e = np.array(e)
    stat = float(((o - e) ** 2 / e).sum())
    p = float(sps.chi2.sf(stat, len(e) - 1))
    return stat, p


def tv_distance(p: Mapping[Hashable, float], q: Mapping[Hashable, float]):
    """Total variation distance between two pmfs given as mappings.

    Returns a Fraction when every value is rational (int or Fraction).
    """
    exact = all(isinstance(v, (int, Fraction)) for v in (*p.values(), *q.values()))
    for name, d in (("p", p), ("q", q)):
        s = sum(d.values())
        if abs(float(s) - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {float(s)!r}")
    keys = set(p) | set(q)
    zero = Fraction(0) if exact else 0.0
    total = sum((abs(p.get(k, zero) - q.get(k, zero)) for k in keys), zero)
    return total / 2


def empirical_pmf(samples: Sequence[Hashable]) -> dict:
    out: dict = {}
    for s in samples:
        out[s] = out.get(s, 0) + 1
    n = len(samples)
    return {k: v / n for k, v in out.items()}


def result_rows_csv(rows) -> str:
    """Render (test_name, statistic, p_value, n, seed) rows as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["test_name", "statistic", "p_value", "n", "seed"])
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
