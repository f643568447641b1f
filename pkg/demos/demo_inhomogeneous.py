"""Whole-space fitting with the inhomogeneous norm: cells, edge cases, and
cross-cell additivity.

Run:  python demos/demo_inhomogeneous.py
"""

import numpy as np

from sobfit import solve_inhomogeneous

rng = np.random.default_rng(2)

one = solve_inhomogeneous(np.array([[0.3, 0.4]]), 1, 2, 3.0)
print("single point: proxy =", one.norm_proxy(np.array([2.5])), "(= |f| exactly)")

empty = solve_inhomogeneous(np.zeros((0, 2)), 1, 2, 3.0)
print("no data: proxy =", empty.norm_proxy(np.zeros(0)))

a = rng.random((12, 2)) * 0.2
b = rng.random((9, 2)) * 0.2 + 30.0
fa, fb = rng.normal(size=12), rng.normal(size=9)
va = solve_inhomogeneous(a, 1, 2, 3.0).norm_proxy(fa)
vb = solve_inhomogeneous(b, 1, 2, 3.0).norm_proxy(fb)
vab = solve_inhomogeneous(np.vstack([a, b]), 1, 2, 3.0).norm_proxy(
    np.concatenate([fa, fb]))
print("far-apart groups: proxy^p additivity gap =",
      abs(vab ** 3 - va ** 3 - vb ** 3))

art = solve_inhomogeneous(a, 1, 2, 3.0)
x = a[0]
print("jet at a data point:", art.query_jet(fa, x), " f =", fa[0])
