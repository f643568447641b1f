"""The independent oracles and where their formulas come from.

For m = 1, n = 1 the trace seminorm has a closed form: on each gap
[x_i, x_{i+1}] the extension minimizing int |F'|^p subject to the endpoint
values is affine (Hoelder's inequality is tight exactly for constant |F'|),
so the minimal energy of the gap is |f_{i+1} - f_i|^p / (x_{i+1} - x_i)^(p-1)
and gaps decouple.  The grid oracle replaces calculus with a discrete
m-th-order difference energy minimized by reweighted least squares.

Run:  python demos/demo_oracles.py
"""

import numpy as np

from sobfit import exact_trace_1d, grid_trace, solve_homogeneous

rng = np.random.default_rng(1)
xs = np.sort(rng.random(9))
fs = rng.normal(size=9)

print("exact 1-d value        :", exact_trace_1d(xs, fs, 2.0))
v, v2 = grid_trace(xs[:, None], fs, 1, 1, 2.0, h=np.min(np.diff(xs)) / 32)
print("grid relaxation        :", v)
print("grid at doubled spacing:", v2)

art = solve_homogeneous(xs[:, None], 1, 1, 2.0)
print("solver norm proxy      :", art.norm_proxy(fs))
print("(the proxy is equivalent to the exact value up to the frozen band)")
