"""Walk through the geometric layers for a small 2-d data set: the stopping
time decomposition, its keystone cubes, and the disagreeing touching pairs.

Run:  python demos/demo_decompositions.py
"""

import numpy as np

from sobfit.constants import default_constants
from sobfit.czdecomp import build_whitney, touching_pairs
from sobfit.geometry import EGeometry
from sobfit.keystone import KeystoneIndex
from sobfit.solver import Chart

rng = np.random.default_rng(3)
pts = rng.random((30, 2))
consts = default_constants(2)
chart = Chart(pts, consts.bits, 2)
geom = EGeometry(chart.ints, consts.bits)

part = build_whitney(geom)
print(f"one point per 3-dilate: {len(part)} cubes, "
      f"levels {int(part.level.min())}..{int(part.level.max())}")

pairs = touching_pairs(part)
ratio = part.side[pairs[:, 0]] / part.side[pairs[:, 1]]
print(f"touching pairs: {len(pairs)}, size ratios within "
      f"[{ratio.min():.2f}, {ratio.max():.2f}]")

ki = KeystoneIndex(part, consts)
print(f"keystone cubes: {int(ki.keystone.sum())} "
      f"(local minima of the size field)")
print(f"disagreeing touching pairs: {len(ki.border_disputes)}")

# every chain of marks ends at a keystone at least as small as its start
sides = part.side
assert np.all(sides[ki.K] <= sides)
print("mark sizes never exceed their cube's size: ok")
