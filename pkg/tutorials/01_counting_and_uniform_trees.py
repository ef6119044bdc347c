"""Counting unordered trees and drawing them uniformly.

Run: python3 tutorials/01_counting_and_uniform_trees.py
"""

import math
from collections import Counter

import numpy as np

from branchlab.polya import constants, otter_counts, rank_tree, uniform_tree, unrank_tree
from branchlab.trees import enumerate_trees

# Exact counts T_n of rooted unordered trees with n vertices.
tables = otter_counts(math.inf, 400)
print("T_1..T_10:", tables.T[1:11])
print("binary-bounded T_1..T_10:", otter_counts(2, 10).T[1:11])

# The growth rate and the constants estimated from the tables.
c = constants(tables)
print(f"rho ~ {c.rho:.8f}, kappa ~ {c.kappa:.6f}, c_inf ~ {c.c_m:.6f}")

# Ranks give a bijection between {0, ..., T_n - 1} and the trees of size n.
for r in range(tables.T[4]):
    t = unrank_tree(tables, 4, r)
    print(r, t.to_brackets(), rank_tree(tables, t))

# Uniform sampling: each of the 48 trees with 7 vertices should appear ~1/48 of the time.
rng = np.random.default_rng(1)
counts = Counter(uniform_tree(tables, 7, rng) for _ in range(48_000))
freq = sorted(counts[t] for t in enumerate_trees(7))
print("min/max count over the 48 trees:", freq[0], freq[-1])

# Large trees come from tilted float tables, beyond the exact range.
big = uniform_tree(tables, 2000, rng)
print("a uniform tree with 2000 vertices has height", big.height)
