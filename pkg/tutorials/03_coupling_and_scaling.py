"""Uniform trees versus Markov branching trees, and two models on one scale.

Run: python3 tutorials/03_coupling_and_scaling.py
"""

import math
from collections import Counter

import numpy as np

from branchlab.polya import constants, natural_coupling, otter_counts, uniform_tree, uniform_vertex_depths
from branchlab.samplers import gw_uniform_vertex_depths
from branchlab.splitlaws import OffspringLaw
from branchlab.stats import ks_two_sample

rng = np.random.default_rng(3)
tables = otter_counts(math.inf, 400)

# The coupling only touches groups of equal-sized sibling subtrees that repeat.
jstars = Counter()
worst = 0
for _ in range(2000):
    t = uniform_tree(tables, 100, rng)
    out = natural_coupling(tables, t, rng)
    jstars[out.jstar] += 1
    worst = max(worst, abs(out.coupled.height - t.height) - 2 * out.jstar)
print("j* histogram at n=100:", dict(sorted(jstars.items())))
print("max of |height difference| - 2 j*:", worst, "(never positive)")

# Depth of a uniform vertex: binary GW trees against binary-bounded uniform trees.
n, reps = 1001, 3000
xi = OffspringLaw.binary()
t2 = otter_counts(2, 400)
c2 = constants(t2).c_m
gw = gw_uniform_vertex_depths(xi, n, reps, rng) * xi.sigma / (2 * math.sqrt(n))
uni = uniform_vertex_depths(t2, n, reps, rng) / (c2 * math.sqrt(n))
print(f"rescaled mean depth: GW {gw.mean():.3f}, uniform m=2 {uni.mean():.3f}")
print("two-sample KS statistic:", round(ks_two_sample(gw, uni)[0], 4))
