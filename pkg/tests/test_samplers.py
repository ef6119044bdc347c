import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchlab.partitions import IntPartition, SetPartition
from branchlab.polya import otter_counts, uniform_law
from branchlab.samplers import (
    alpha_theta_grow,
    alpha_theta_root_splits,
    chain_step,
    exact_P_law,
    exact_Q_law,
    gw_heights,
    gw_offspring_sequence,
    gw_tree,
    gw_uniform_vertex_depths,
    labeled_tree,
    sample_P,
    sample_Q,
)
from branchlab.splitlaws import HalvingLaw, OffspringLaw, alpha_theta_law, gw_law, tabulated_law
from branchlab.stats import chi_square_gof, empirical_pmf, ks_two_sample, tv_distance
from branchlab.trees import LEAF, canonicalize, path_tree, random_point_depth, reduced_edge_tree

from oracles import canon, gw_conditioned_law

CHERRY = canonicalize([[], []])
P = IntPartition

LEAF_Q = tabulated_law({
    2: [((1, 1), 0.9), ((2,), 0.1)],
    3: [((2, 1), 0.6), ((1, 1, 1), 0.3), ((3,), 0.1)],
    4: [((2, 2), 0.3), ((3, 1), 0.4), ((2, 1, 1), 0.2), ((4,), 0.1)],
    5: [((3, 2), 0.5), ((4, 1), 0.3), ((2, 2, 1), 0.1), ((5,), 0.1)],
    6: [((3, 3), 0.3), ((4, 2), 0.4), ((2, 2, 2), 0.2), ((6,), 0.1)],
})


def _to_oracle(t):
    return canon(tuple(_to_oracle(k) for k in t.kids))


def _chi2_against(law, draws):
    keys = list(law)
    obs = Counter(draws)
    assert set(obs) <= set(keys)
    return chi_square_gof([obs[k] for k in keys], [float(law[k]) for k in keys])[1]


# -- leaf model ---------------------------------------------------------------

def test_sample_P_trivial_cases(rng):
    q = HalvingLaw()
    assert all(sample_P(q, 1, rng) is LEAF for _ in range(20))
    four = canonicalize([[[], []], [[], []]])
    assert all(sample_P(q, 4, rng) is four for _ in range(20))


def test_sample_P_errors(rng):
    with pytest.raises(ValueError):
        sample_P(gw_law(OffspringLaw.binary(), 8), 3, rng)
    stuck = HalvingLaw()
    stuck.trivial_mass = lambda n: 1.0
    with pytest.raises(ValueError):
        sample_P(stuck, 2, rng)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 100), st.integers(0, 2**32 - 1))
def test_sample_P_leaf_count(n, seed):
    rng = np.random.default_rng(seed)
    q = alpha_theta_law(0.4, 1.0) if seed % 2 else HalvingLaw()
    assert sample_P(q, n, rng).n_leaves == n


def test_sample_P_matches_exact_law(rng):
    law = exact_P_law(LEAF_Q, 4, tail=1e-10)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-9)
    draws = [sample_P(LEAF_Q, 4, rng) for _ in range(20_000)]
    # bins with tiny mass (long holds) are merged by the test
    assert _chi2_against(law, draws) > 0.001


def test_leaf_strings(rng):
    # q_1((1)) > 0 plants strings of length G above leaves, P(G = k) = 0.2**k * 0.8
    q = tabulated_law({1: [((), 0.8), ((1,), 0.2)], 2: [((1, 1), 1.0)]})
    one = exact_P_law(q, 1)
    assert one[LEAF] == pytest.approx(0.8) and one[path_tree(3)] == pytest.approx(0.8 * 0.04)
    draws = [sample_P(q, 1, rng).size - 1 for _ in range(20_000)]
    counts = np.bincount(draws, minlength=4)[:4]
    probs = [0.8 * 0.2**k for k in range(4)]
    assert chi_square_gof(list(counts) + [len(draws) - counts.sum()],
                          probs + [1 - sum(probs)])[1] > 0.001


# -- vertex model -------------------------------------------------------------

def test_sample_Q_examples(rng):
    q = gw_law(OffspringLaw.binary(), 16)
    assert sample_Q(q, 1, rng) is LEAF
    assert all(sample_Q(q, 3, rng) is CHERRY for _ in range(20))
    with pytest.raises(ValueError):
        sample_Q(LEAF_Q, 3, rng)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_sample_Q_vertex_count(n, seed):
    q = gw_law(OffspringLaw.poisson(), 64)
    assert sample_Q(q, n, np.random.default_rng(seed)).size == n


# binary trees have an odd number of vertices
@pytest.mark.parametrize("name,n", [("binary", n) for n in (1, 3, 5, 7)]
                         + [("poisson", n) for n in range(1, 8)])
def test_exact_Q_law_equals_conditioned_gw(name, n):
    if name == "binary":
        xi, f = OffspringLaw.binary(), (lambda k: 0.5 if k in (0, 2) else 0.0)
    else:
        xi = OffspringLaw.poisson()
        f = lambda k: xi.pmf[k] if k < len(xi.pmf) else 0.0
    got = exact_Q_law(gw_law(xi, 32), n)
    want = gw_conditioned_law(f, n)
    assert tv_distance({_to_oracle(t): p for t, p in got.items()}, want) <= 1e-12


def test_exact_Q_law_binary_five():
    law = exact_Q_law(gw_law(OffspringLaw.binary(), 16), 5)
    assert list(law) == [canonicalize([[[], []], []])]


def test_sample_Q_matches_exact_law(rng):
    q = gw_law(OffspringLaw.poisson(), 32)
    law = exact_Q_law(q, 6)
    draws = [sample_Q(q, 6, rng) for _ in range(20_000)]
    assert _chi2_against(law, draws) > 0.001


def test_exact_Q_law_uniform_is_rational():
    q = uniform_law(otter_counts(math.inf, 12))
    for n in range(1, 9):
        law = exact_Q_law(q, n)
        assert sum(law.values()) == 1
        assert all(isinstance(p, Fraction) for p in law.values())
    with pytest.raises(ValueError):
        exact_Q_law(q, 10)


def test_markov_branching_differs_from_uniform_at_seven():
    tables = otter_counts(math.inf, 12)
    mb = exact_Q_law(uniform_law(tables), 7)
    path3 = canonicalize([[[]]])
    twin = canonicalize([path3.to_nested(), path3.to_nested()])
    # the root split (3, 3) has the same mass under both laws; given it, the
    # i.i.d. draws make the twin pair 1/4 whereas uniform trees make it 1/3
    split = uniform_law(tables).table_exact(6)[P((3, 3))]
    assert mb[twin] == split * Fraction(1, 4)
    uniform = {t: Fraction(1, 48) for t in mb}
    assert len(mb) == 48 and sum(mb.values()) == 1
    assert Fraction(1, 48) == split * Fraction(1, 3)
    assert tv_distance(mb, uniform) > 0


# -- labeled chain ------------------------------------------------------------

def test_chain_step_fixed_points(rng):
    fine = SetPartition.finest([1, 2, 3])
    assert chain_step(LEAF_Q, fine, rng) == fine


def test_chain_step_uniform_over_shape(rng):
    q = tabulated_law({3: [((2, 1), 1.0)], 2: [((1, 1), 1.0)]})
    start = SetPartition.coarsest([1, 2, 3])
    draws = Counter(chain_step(q, start, rng) for _ in range(100_000))
    assert len(draws) == 3
    _, p = chi_square_gof(list(draws.values()), [1 / 3] * 3)
    assert p > 0.001


def test_chain_step_shape_law(rng):
    start = SetPartition.coarsest(range(1, 7))
    shapes = [chain_step(LEAF_Q, start, rng).shape() for _ in range(20_000)]
    assert _chi2_against(LEAF_Q.table(6), shapes) > 0.001


def test_labeled_tree_singleton(rng):
    lt, path = labeled_tree(LEAF_Q, [7], rng)
    assert lt.tree is LEAF and lt.labels == {7} and len(path) == 1


def test_labeled_tree_law_matches_exact_P(rng):
    law = exact_P_law(LEAF_Q, 4, tail=1e-10)
    draws = [labeled_tree(LEAF_Q, [1, 2, 3, 4], rng)[0].tree for _ in range(100_000)]
    assert tv_distance(empirical_pmf(draws), law) <= 0.01


def test_labeled_tree_and_direct_sampler_agree(rng):
    for n in (3, 5):
        law = exact_P_law(LEAF_Q, n, tail=1e-10)
        via_chain = empirical_pmf([labeled_tree(LEAF_Q, range(n), rng)[0].tree for _ in range(20_000)])
        direct = empirical_pmf([sample_P(LEAF_Q, n, rng) for _ in range(20_000)])
        assert tv_distance(via_chain, law) <= 0.03
        assert tv_distance(direct, law) <= 0.03


def test_labeled_tree_reduced_tree(rng):
    for _ in range(50):
        lt, path = labeled_tree(LEAF_Q, [1, 2, 3, 4, 5], rng)
        assert lt.labels == {1, 2, 3, 4, 5}
        assert reduced_edge_tree(path, [1, 2, 3, 4, 5]).metric_equal(lt.structure)
        assert lt.tree.n_leaves == 5


def test_labeled_tree_exchangeable(rng):
    # the first label to be cut off alone is uniform by symmetry
    first_out = Counter()
    for _ in range(20_000):
        _, path = labeled_tree(LEAF_Q, [1, 2, 3, 4], rng)
        for state in path.states[1:]:
            singles = [b[0] for b in state.blocks if len(b) == 1]
            if singles:
                if len(singles) == 1:
                    first_out[singles[0]] += 1
                break
    _, p = chi_square_gof([first_out[i] for i in (1, 2, 3, 4)], [0.25] * 4)
    assert p > 0.001


def test_relabel_roundtrip(rng):
    lt, _ = labeled_tree(LEAF_Q, [1, 2, 3], rng)
    back = lt.relabel({1: "a", 2: "b", 3: "c"}).relabel({"a": 1, "b": 2, "c": 3})
    assert back.key() == lt.key()


# -- (alpha, theta) growth -------------------------------------------------------

def test_alpha_theta_grow_small(rng):
    assert all(alpha_theta_grow(0.5, 0.5, 2, rng) is CHERRY for _ in range(10))
    with pytest.raises(ValueError):
        alpha_theta_grow(1.5, 0.5, 4, rng)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.floats(0.05, 0.95), st.floats(0.0, 3.0), st.integers(0, 2**32 - 1))
def test_alpha_theta_grow_binary(n, alpha, theta, seed):
    t = alpha_theta_grow(alpha, theta, n, np.random.default_rng(seed))
    assert t.n_leaves == n
    stack = [t]
    while stack:
        v = stack.pop()
        assert len(v.kids) in (0, 2)
        stack.extend(v.kids)


def test_alpha_theta_root_split_law(rng):
    law = alpha_theta_law(0.5, 0.5).table(8)
    counts = alpha_theta_root_splits(0.5, 0.5, 8, 30_000, rng)
    keys = list(law)
    _, p = chi_square_gof([counts[k] for k in keys], [law[k] for k in keys])
    assert p > 0.001


# -- conditioned Galton-Watson trees ----------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_lukasiewicz_path(n, seed):
    x = gw_offspring_sequence(OffspringLaw.poisson(), n, np.random.default_rng(seed))
    walk = np.cumsum(x - 1)
    assert x.size == n and walk[-1] == -1 and np.all(walk[:-1] >= 0)


def test_gw_tree_law(rng):
    xi = OffspringLaw.poisson()
    law = exact_Q_law(gw_law(xi, 16), 6)
    draws = [gw_tree(xi, 6, rng) for _ in range(20_000)]
    assert _chi2_against(law, draws) > 0.001
    with pytest.raises(ValueError):
        gw_offspring_sequence(OffspringLaw.binary(), 4, rng)


def test_gw_depth_shortcut(rng):
    xi = OffspringLaw.binary()
    fast = gw_uniform_vertex_depths(xi, 41, 4000, rng)
    slow = [random_point_depth(gw_tree(xi, 41, rng), "vertices", rng) for _ in range(4000)]
    assert ks_two_sample(fast, np.array(slow))[1] > 0.001
    heights = gw_heights(xi, 41, 500, rng)
    slow_h = [gw_tree(xi, 41, rng).height for _ in range(500)]
    assert ks_two_sample(heights, np.array(slow_h))[1] > 0.001


def test_gw_height_moments_bounded(rng):
    xi = OffspringLaw.binary()
    m4 = [np.mean((gw_heights(xi, n, 2000, rng) / math.sqrt(n)) ** 4) for n in (101, 401, 1601)]
    for a, b in zip(m4, m4[1:]):
        assert 0.5 <= b / a <= 2
