"""Probing the scaling hypothesis on three families of splitting laws.

The probe is a_n * E[(1 - lambda_1/n) f(lambda/n)]; as n grows it should
settle on an integral against the limiting dislocation measure.

Run: python3 tutorials/02_hypothesis_H_probes.py
"""

import math

import numpy as np
from scipy import integrate

from branchlab.polya import constants, otter_counts, uniform_law
from branchlab.splitlaws import OffspringLaw, alpha_theta_law, gw_law, probe_H

# Binary Galton-Watson trees conditioned on their size: exact summation.
g = lambda x: min(x, 1 - x) * x**-0.5 * (1 - x) ** -1.5
target = sum(integrate.quad(g, a, b)[0] for a, b in ((0, 0.5), (0.5, 1))) / math.sqrt(2 * math.pi)
q = gw_law(OffspringLaw.binary(), 4000)
print(f"GW binary, target {target:.6f}")
for n in (200, 800, 3200):
    est = probe_H(q, None, n, mode="exact").estimate
    print(f"  n={n:5d}  probe={est:.6f}  rel.err={abs(est / target - 1):.4f}")

# The (alpha, theta) family: the limit is 1/sqrt(pi) at alpha = theta = 1/2.
q = alpha_theta_law(0.5, 0.5)
print(f"alpha-theta, target {1 / math.sqrt(math.pi):.6f}")
for n in (50, 200, 800):
    print(f"  n={n:5d}  probe={probe_H(q, None, n, mode='exact').estimate:.6f}")

# Uniform unordered trees: Monte Carlo over root splits.
tables = otter_counts(math.inf, 400)
c = constants(tables)
target = 2 * c.kappa * c.psi_partial
rng = np.random.default_rng(7)
print(f"uniform trees, target {target:.6f}")
for n in (500, 2000):
    r = probe_H(uniform_law(tables), None, n, mode="mc", reps=50_000, rng=rng)
    print(f"  n={n:5d}  probe={r.estimate:.4f} +- {r.stderr:.4f}")
