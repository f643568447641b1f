"""Fit scattered 1-d data, evaluate the norm proxy, and plot-style sample the
interpolant through jet queries.

Run:  python demos/demo_fit_and_query.py
"""

import numpy as np

from sobfit import solve_homogeneous, exact_trace_1d

rng = np.random.default_rng(0)
xs = np.sort(rng.random(40))
fs = np.sin(6 * xs) + 0.1 * rng.normal(size=40)

art = solve_homogeneous(xs[:, None], m=1, n=1, p=2.0)
E = art.points_raw[:, 0]

print("trace-norm proxy :", art.norm_proxy(fs))
print("exact 1-d oracle :", exact_trace_1d(E, fs, 2.0))

print("\ninterpolation check (worst abs error at the data):")
errs = [abs(art.query_jet(fs, np.array([x]))[0] - v) for x, v in zip(E, fs)]
print("  ", max(errs))

print("\nsamples of the interpolant between data points:")
for x in np.linspace(0.05, 0.95, 7):
    jet = art.query_jet(fs, np.array([x]))
    print(f"  Tf({x:.2f}) = {jet[0]: .4f}")
