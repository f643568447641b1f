"""Polynomial smoothstep bumps and their jets.

All cutoffs are tensor products of one-dimensional piecewise polynomials
built from the degree-(2m+1) smoothstep with m vanishing derivatives at both
ends, so every cutoff used by the extension operators is C^m with explicitly
evaluable derivatives.
"""

from functools import lru_cache
from math import comb

import numpy as np


@lru_cache(maxsize=None)
def smoothstep_coeffs(m):
    """Coefficients (ascending) of s_m on [0,1]: s(0)=0, s(1)=1, s^(k) zero at
    both ends for k <= m."""
    c = np.zeros(2 * m + 2)
    for k in range(m + 1):
        c[m + 1 + k] = comb(m + k, k) * comb(2 * m + 1, m - k) * (-1) ** k
    return c


def _polyval_derivs(coeffs, u, kmax):
    """Values of the polynomial and derivatives 0..kmax at u (scalar)."""
    out = np.zeros(kmax + 1)
    c = np.asarray(coeffs, dtype=float)
    for k in range(kmax + 1):
        if len(c) == 0:
            break
        out[k] = np.polyval(c[::-1], u)
        c = c[1:] * np.arange(1, len(c))
    return out


def smoothstep_derivs(m, u, kmax):
    """s_m and derivatives 0..kmax at u, clamped outside [0,1]."""
    if u <= 0.0:
        out = np.zeros(kmax + 1)
        return out
    if u >= 1.0:
        out = np.zeros(kmax + 1)
        out[0] = 1.0
        return out
    return _polyval_derivs(smoothstep_coeffs(m), u, kmax)


def bump_derivs(m, t, lo, hi, kmax):
    """One-dimensional bump: 1 on [-lo, lo], 0 outside (-hi, hi), C^m.

    Returns values and derivatives 0..kmax at t.
    """
    a = abs(t)
    if a <= lo:
        out = np.zeros(kmax + 1)
        out[0] = 1.0
        return out
    if a >= hi:
        return np.zeros(kmax + 1)
    u = (hi - a) / (hi - lo)
    s = smoothstep_derivs(m, u, kmax)
    out = np.zeros(kmax + 1)
    scale = -1.0 / (hi - lo) * (1.0 if t >= 0 else -1.0)
    for k in range(kmax + 1):
        out[k] = s[k] * scale ** k
    return out


def ramp_derivs(m, t, lo, hi, kmax):
    """One-sided C^m ramp: 0 for t <= lo, 1 for t >= hi."""
    if t <= lo:
        return np.zeros(kmax + 1)
    if t >= hi:
        out = np.zeros(kmax + 1)
        out[0] = 1.0
        return out
    u = (t - lo) / (hi - lo)
    s = smoothstep_derivs(m, u, kmax)
    scale = 1.0 / (hi - lo)
    return np.array([s[k] * scale ** k for k in range(kmax + 1)])


@lru_cache(maxsize=None)
def _eta_poly(m):
    """Polynomial part of eta on [0, 1/2]: eta(t) = 1/4 + int_0^t s_m(2u) du."""
    c = smoothstep_coeffs(m)
    # s_m(2u): coefficients c_k 2^k; antiderivative: /(k+1)
    ci = np.zeros(len(c) + 1)
    for k, v in enumerate(c):
        ci[k + 1] = v * (2.0 ** k) / (k + 1)
    ci[0] = 0.25
    return ci


def eta_derivs(m, t, kmax):
    """The normalizer eta: eta(t) = t for t >= 1/2, eta >= 1/4 everywhere,
    C^m; returns derivatives 0..kmax at t."""
    if t >= 0.5:
        out = np.zeros(kmax + 1)
        out[0] = t
        if kmax >= 1:
            out[1] = 1.0
        return out
    return _polyval_derivs(_eta_poly(m), max(t, 0.0), kmax)


def tensor_bump_jet(m, n, jets, x, center, half_lo, half_hi):
    """Jet (derivative coefficients in `jets` order) at x of the tensor bump
    that is 1 on the box center +- half_lo and 0 outside center +- half_hi."""
    per_axis = []
    for i in range(n):
        per_axis.append(bump_derivs(m, x[i] - center[i], half_lo[i], half_hi[i], m))
    out = np.empty(jets.D)
    for k, alpha in enumerate(jets.alphas):
        v = 1.0
        for i, ai in enumerate(alpha):
            v *= per_axis[i][ai]
        out[k] = v
    return out


def compose_eta_jet(m, n, jets, psi_jet):
    """Jet of eta(Psi(x)) from the jet of Psi, by truncated composition."""
    zero = (0,) * n
    i0 = jets.index[zero]
    base = psi_jet[i0]
    ed = eta_derivs(m, base, m)
    shifted = psi_jet.copy()
    shifted[i0] = 0.0
    out = np.zeros(jets.D)
    out[i0] = ed[0]
    power = None
    fact = 1.0
    for k in range(1, m):
        fact *= k
        power = shifted if power is None else jets.multiply(power, shifted)
        out = out + (ed[k] / fact) * power
    # k = m term only affects order-m coefficients, absent from degree m-1 jets
    return out


def reciprocal_jet(n, jets, u):
    """Jet of 1/u from the jet of u (u(x0) != 0), truncated geometric series."""
    zero = (0,) * n
    i0 = jets.index[zero]
    u0 = u[i0]
    if u0 == 0:
        raise ZeroDivisionError("reciprocal of a vanishing jet")
    w = -(u.copy()) / u0
    w[i0] = 0.0
    out = np.zeros(jets.D)
    out[i0] = 1.0
    acc = None
    for _ in range(1, jets.m):
        acc = w if acc is None else jets.multiply(acc, w)
        out = out + acc
    return out / u0
