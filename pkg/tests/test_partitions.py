import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchlab.partitions import (
    EMPTY,
    IntPartition,
    SetPartition,
    block_containing_probability,
    count_partitions,
    enumerate_partitions,
    paintbox,
    refined_count,
    shape_count,
    uniform_shape_partition,
)
from branchlab.stats import chi_square_gof

from oracles import bell_triangle, brute_partitions, exchangeable_block_prob, set_partitions


def test_enumerate_four():
    got = [p.parts for p in enumerate_partitions(4)]
    assert got == [(4,), (3, 1), (2, 2), (2, 1, 1), (1, 1, 1, 1)]


def test_enumerate_one_and_bounded():
    assert [p.parts for p in enumerate_partitions(1)] == [(1,)]
    assert [p.parts for p in enumerate_partitions(5, max_parts=2)] == [(5,), (4, 1), (3, 2)]


@pytest.mark.parametrize("n", range(1, 16))
def test_enumerate_matches_bruteforce_and_pentagonal(n):
    got = [p.parts for p in enumerate_partitions(n)]
    assert len(got) == len(set(got))
    assert set(got) == brute_partitions(n)
    assert len(got) == count_partitions(n)
    assert got == sorted(got, reverse=True)


def test_int_partition_fields():
    lam = IntPartition((3, 3, 1))
    assert lam.n == 7 and lam.p == 3
    assert lam.multiplicity(3) == 2 and lam.multiplicity(2) == 0
    assert sum(j * m for j, m in lam.multiplicities().items()) == lam.n
    assert EMPTY.n == 1 and EMPTY.p == 0 and EMPTY != IntPartition((1,))
    with pytest.raises(ValueError):
        IntPartition((1, 2))
    with pytest.raises(ValueError):
        IntPartition((0,))


def test_shape_count_examples():
    assert shape_count(IntPartition((2, 1))) == 3
    assert shape_count(IntPartition((9,))) == 1
    assert shape_count(IntPartition((1, 1, 1, 1))) == 1
    with pytest.raises(ValueError):
        shape_count(EMPTY)


@pytest.mark.parametrize("n", range(1, 11))
def test_shape_counts_sum_to_bell(n):
    assert sum(shape_count(l) for l in enumerate_partitions(n)) == bell_triangle(n)


def test_refined_count_examples():
    lam = IntPartition((2, 1))
    assert refined_count(lam, SetPartition(((1,), (2,))), (1, 2)) == 1
    assert refined_count(lam, SetPartition(((1, 2),)), (1,)) == 1
    ones = IntPartition((1,) * 5)
    assert refined_count(ones, SetPartition.finest(range(1, 6)), range(1, 6)) == 1


def _brute_refined(lam, sub, assignment):
    k = sub.size
    target = [lam[i - 1] for i in assignment]
    count = 0
    for sp in set_partitions(range(1, lam.n + 1)):
        pi = SetPartition(tuple(tuple(b) for b in sp))
        if pi.shape() != lam or pi.restrict(range(1, k + 1)) != sub:
            continue
        # block j of pi (least-element order) meets [k] in sub's block j
        if all(len(pi.blocks[j]) == target[j] for j in range(len(sub.blocks))):
            count += 1
    return count


@pytest.mark.parametrize("parts,k", [((3, 2, 1), 3), ((2, 2, 1), 2), ((3, 1, 1, 1), 3),
                                     ((2, 2, 2), 4), ((4, 2), 2), ((2, 1, 1), 3)])
def test_refined_count_bruteforce(parts, k):
    lam = IntPartition(parts)
    for sp in set_partitions(range(1, k + 1)):
        sub = SetPartition(tuple(tuple(b) for b in sp))
        for assign in itertools.permutations(range(1, lam.p + 1), len(sub.blocks)):
            if any(len(b) > lam[i - 1] for b, i in zip(sub.blocks, assign)):
                continue
            assert refined_count(lam, sub, assign) == _brute_refined(lam, sub, assign)


@pytest.mark.parametrize("n", range(1, 8))
def test_refined_counts_sum_to_shape_count(n):
    for lam in enumerate_partitions(n):
        for k in range(1, n + 1):
            total = 0
            for sp in set_partitions(range(1, k + 1)):
                sub = SetPartition(tuple(tuple(b) for b in sp))
                seen = set()
                for assign in itertools.permutations(range(1, lam.p + 1), len(sub.blocks)):
                    sizes = tuple(lam[i - 1] for i in assign)
                    # equal part sizes give the same set of partitions
                    if sizes in seen or any(len(b) > s for b, s in zip(sub.blocks, sizes)):
                        continue
                    seen.add(sizes)
                    total += refined_count(lam, sub, assign)
            assert total == shape_count(lam)


def test_set_partition_canonical():
    a = SetPartition(((3, 2), (1, 4)))
    assert a.blocks == ((1, 4), (2, 3))
    assert a == SetPartition(((4, 1), (2, 3)))
    assert a.restrict({2, 4}).blocks == ((2,), (4,))
    assert a.shape() == IntPartition((2, 2))
    assert SetPartition.from_json(a.to_json()) == a
    with pytest.raises(ValueError):
        a.restrict({7})


def test_paintbox_trivial(rng):
    assert paintbox([1.0, 0.0], 6, rng) == SetPartition.coarsest(range(1, 7))
    assert paintbox([0.3, 0.7], 1, rng) == SetPartition(((1,),))
    with pytest.raises(ValueError):
        paintbox([0.5, 0.4], 3, rng)


def test_paintbox_pair_probability(rng):
    reps = 100_000
    same = sum(len(paintbox([0.5, 0.5], 2, rng)) == 1 for _ in range(reps))
    sd = np.sqrt(0.25 / reps)
    assert abs(same / reps - 0.5) < 3 * sd


def test_paintbox_restriction_consistency():
    rng = np.random.default_rng(7)
    s = [0.5, 0.3, 0.2]
    reps = 20_000
    a = Counter(paintbox(s, 6, rng).restrict(range(1, 4)).shape().parts for _ in range(reps))
    b = Counter(paintbox(s, 3, rng).shape().parts for _ in range(reps))
    keys = sorted(set(a) | set(b))
    table = np.array([[a[k] for k in keys], [b[k] for k in keys]])
    from scipy.stats import chi2_contingency
    assert chi2_contingency(table).pvalue > 0.001


def test_paintbox_dust_tail(rng):
    s = np.array([0.5, 0.5 - 1e-16, 1e-16])
    s = s / s.sum()
    for _ in range(100):
        pi = paintbox(s, 5, rng)
        assert pi.ground == frozenset(range(1, 6))


def test_uniform_shape_partition_uniform(rng):
    lam = IntPartition((2, 1))
    reps = 100_000
    outs = Counter(uniform_shape_partition(lam, [1, 2, 3], rng) for _ in range(reps))
    assert len(outs) == shape_count(lam)
    keys = sorted(outs, key=repr)
    _, p = chi_square_gof([outs[k] for k in keys], [1 / 3] * 3)
    assert p > 0.001


def test_uniform_shape_partition_trivial(rng):
    assert uniform_shape_partition(IntPartition((4,)), range(1, 5), rng) == SetPartition.coarsest(range(1, 5))
    assert uniform_shape_partition(IntPartition((1,) * 4), range(1, 5), rng) == SetPartition.finest(range(1, 5))
    with pytest.raises(ValueError):
        uniform_shape_partition(IntPartition((2, 1)), [1, 2], rng)


def test_uniform_shape_partition_exchangeable():
    rng = np.random.default_rng(3)
    lam = IntPartition((2, 2, 1))
    reps = 30_000
    perm = {1: 3, 2: 5, 3: 1, 4: 2, 5: 4}
    a = Counter(uniform_shape_partition(lam, range(1, 6), rng) for _ in range(reps))
    b = Counter(uniform_shape_partition(lam, range(1, 6), rng).relabel(perm) for _ in range(reps))
    keys = sorted(set(a) | set(b), key=repr)
    from scipy.stats import chi2_contingency
    assert chi2_contingency(np.array([[a[k] for k in keys], [b[k] for k in keys]])).pvalue > 0.001


def test_block_containing_probability_examples():
    assert block_containing_probability(3, 2, 2, 1) == Fraction(1, 2)
    assert block_containing_probability(5, 5, 5, 5) == 1
    assert block_containing_probability(4, 3, 2, 2) == Fraction(1, 3)


@pytest.mark.parametrize("n", range(1, 8))
def test_block_containing_probability_oracle_and_sum(n):
    from math import comb
    for k in range(1, n + 1):
        for b in range(1, n + 1):
            total = Fraction(0)
            for l in range(1, k + 1):
                pr = block_containing_probability(n, k, b, l)
                assert pr == exchangeable_block_prob(n, k, b, l)
                total += comb(k - 1, l - 1) * pr
            assert total == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=6))
def test_shape_roundtrip_property(parts):
    lam = IntPartition.from_parts(parts)
    rng = np.random.default_rng(sum(parts))
    pi = uniform_shape_partition(lam, range(1, lam.n + 1), rng)
    assert pi.shape() == lam
    assert sum(j * m for j, m in lam.multiplicities().items()) == lam.n
