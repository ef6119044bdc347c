import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchlab.polya import otter_counts, uniform_law
from branchlab.samplers import exact_Q_law
from branchlab.stats import (
    chi_square_gof,
    empirical_pmf,
    ks_two_sample,
    result_rows_csv,
    summarize,
    tv_distance,
)
from branchlab.trees import enumerate_trees

REPS = 200
LEVEL = 0.01


def _rejection_band(reps=REPS, level=LEVEL):
    sd = math.sqrt(level * (1 - level) / reps)
    return max(0.0, level - 3 * sd), level + 3 * sd


def test_ks_examples(rng):
    a = rng.random(1000)
    stat, p = ks_two_sample(a, a)
    assert stat == 0 and p == pytest.approx(1.0)
    _, p = ks_two_sample(rng.random(10_000), rng.random(10_000) + 0.5)
    assert p < 1e-6
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


def test_ks_calibration():
    rng = np.random.default_rng(11)
    rejections = sum(ks_two_sample(rng.random(10_000), rng.random(10_000))[1] < LEVEL
                     for _ in range(REPS))
    lo, hi = _rejection_band()
    assert lo <= rejections / REPS <= hi


def test_chi_square_examples(rng):
    stat, p = chi_square_gof([10, 20, 30, 40], [0.1, 0.2, 0.3, 0.4])
    assert stat == 0 and p == pytest.approx(1.0)
    loaded = [1 / 6] * 6
    shifted = rng.multinomial(60_000, [0.2, 0.16, 0.16, 0.16, 0.16, 0.16])
    assert chi_square_gof(shifted, loaded)[1] < 1e-6
    with pytest.raises(ValueError):
        chi_square_gof([1, 2], [0.5, 0.6])
    with pytest.raises(ValueError):
        chi_square_gof([3, 1], [0.99, 0.01])


def test_chi_square_merges_small_bins():
    # the three rare bins are pooled, leaving three bins and two degrees of freedom
    stat, p = chi_square_gof([500, 300, 197, 1, 1, 1], [0.5, 0.3, 0.197, 0.001, 0.001, 0.001])
    assert stat == pytest.approx(0.0) and p == pytest.approx(1.0)


def test_chi_square_fair_die():
    rng = np.random.default_rng(5)
    ps = [chi_square_gof(rng.multinomial(60_000, [1 / 6] * 6), [1 / 6] * 6)[1] for _ in range(100)]
    assert np.mean(np.array(ps) > 0.001) >= 0.99


def test_chi_square_calibration():
    rng = np.random.default_rng(12)
    probs = [0.4, 0.3, 0.2, 0.1]
    rejections = sum(chi_square_gof(rng.multinomial(5000, probs), probs)[1] < LEVEL
                     for _ in range(REPS))
    lo, hi = _rejection_band()
    assert lo <= rejections / REPS <= hi


def test_tv_examples():
    p = {"a": 0.5, "b": 0.5}
    assert tv_distance(p, p) == 0
    assert tv_distance(p, {"c": 1.0}) == 1
    assert tv_distance({1: Fraction(1, 3), 2: Fraction(2, 3)}, {1: Fraction(1, 2), 2: Fraction(1, 2)}) \
        == Fraction(1, 6)
    with pytest.raises(ValueError):
        tv_distance({1: 0.5}, {1: 1.0})


def test_tv_uniform_vs_markov_branching_at_seven():
    t = otter_counts(math.inf, 10)
    mb = exact_Q_law(uniform_law(t), 7)
    trees = enumerate_trees(7)
    uniform = {x: Fraction(1, len(trees)) for x in trees}
    d = tv_distance(mb, uniform)
    assert isinstance(d, Fraction) and d > 0
    assert tv_distance(exact_Q_law(uniform_law(t), 7), uniform) == d


pmfs = st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4).map(
    lambda w: {i: x / sum(w) for i, x in enumerate(w)})


@settings(max_examples=100, deadline=None)
@given(pmfs, pmfs, pmfs)
def test_tv_metric_properties(p, q, r):
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p), abs=1e-15)
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
    assert 0 <= tv_distance(p, q) <= 1 + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_summarize_invariants(xs):
    s = summarize(xs, n_boot=200)
    assert s.count == len(xs)
    assert s.variance >= 0 and s.moments[0] >= 0 and s.moments[2] >= 0
    assert s.ci_low <= s.mean <= s.ci_high


def test_summarize_moments(rng):
    x = rng.normal(size=200_000)
    s = summarize(x, rng)
    assert s.mean == pytest.approx(0, abs=0.01)
    assert s.moments[0] == pytest.approx(1, rel=0.02)
    assert s.moments[2] == pytest.approx(3, rel=0.05)
    with pytest.raises(ValueError):
        summarize([])


def test_empirical_pmf_and_csv():
    pmf = empirical_pmf(["a", "b", "a", "a"])
    assert pmf == {"a": 0.75, "b": 0.25}
    text = result_rows_csv([("ks", 0.1, 0.5, 100, 7)])
    assert text.splitlines() == ["test_name,statistic,p_value,n,seed", "ks,0.1,0.5,100,7"]
