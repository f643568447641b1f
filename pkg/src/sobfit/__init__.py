"""sobfit: fit a Sobolev function to scattered data.

Computes an lp-sum trace-norm proxy equivalent to the L^{m,p} / W^{m,p}
trace norm of finite data, and a linear extension operator answering jet
queries in logarithmic time after near-linear one-time work.
"""

from .constants import Constants, default_constants
from .solver import (norm_proxy, query_functionals, query_jet,
                     solve_homogeneous, solve_inhomogeneous)
from .oracles import brute_lp_min, exact_trace_1d, grid_trace

__all__ = [
    "Constants", "default_constants",
    "solve_homogeneous", "solve_inhomogeneous",
    "norm_proxy", "query_jet", "query_functionals",
    "exact_trace_1d", "grid_trace", "brute_lp_min",
]

__version__ = "0.1.0"
