"""Multiindices of order <= m-1, the total orders on them and on label sets,
and jet arithmetic tables (truncated products and Taylor shifts).

A jet is the coefficient vector (d^alpha P(x0))_{alpha in M}; M is kept in a
fixed graded-lex order so serialized coefficient vectors are portable.
"""

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def multiindices(m, n):
    """All alpha with |alpha| <= m-1, graded-lexicographically ordered."""
    out = []
    for deg in range(m):
        block = [a for a in itertools.product(range(deg + 1), repeat=n) if sum(a) == deg]
        out.extend(sorted(block, reverse=True))
    return tuple(out)


def dim_P(m, n):
    return len(multiindices(m, n))


def multiindex_compare(alpha, beta):
    """Total order on M: -1 if alpha < beta, 0 if equal, +1 otherwise.

    Compares the partial sums a_1+...+a_k at the largest k where they differ.
    """
    if alpha == beta:
        return 0
    sa = sb = 0
    result = 0
    for k in range(len(alpha)):
        sa += alpha[k]
        sb += beta[k]
        if sa != sb:
            result = -1 if sa < sb else 1
    return result


def multiindex_sort_key(alpha):
    """Key tuple reproducing multiindex_compare's order (partial sums, reversed)."""
    sums = list(itertools.accumulate(alpha))
    return tuple(reversed(sums))


def label_compare(A, B):
    """Total order on subsets of M: the minimal element of the symmetric
    difference decides; M is minimal, the empty set maximal."""
    sa, sb = frozenset(A), frozenset(B)
    diff = sa ^ sb
    if not diff:
        return 0
    alpha = min(diff, key=multiindex_sort_key)
    return -1 if alpha in sa else 1


def all_labels_sorted(m, n):
    """Every subset of M, from the minimal label (M itself) to the maximal (empty)."""
    M = multiindices(m, n)
    labels = []
    for r in range(len(M) + 1):
        labels.extend(frozenset(c) for c in itertools.combinations(M, r))

    import functools
    return sorted(labels, key=functools.cmp_to_key(label_compare))


def is_monotonic(A, m, n):
    """True iff alpha in A and |gamma| <= m-1-|alpha| imply alpha+gamma in A."""
    A = frozenset(A)
    M = multiindices(m, n)
    Mset = set(M)
    for alpha in A:
        for gamma in M:
            if sum(gamma) <= m - 1 - sum(alpha):
                s = tuple(a + g for a, g in zip(alpha, gamma))
                if s in Mset and s not in A:
                    return False
    return True


class JetSpace:
    """Fixed-order coefficient space for jets of degree m-1 in n variables.

    Coefficients are the raw derivatives d^alpha P(x0); all tables needed for
    products, Taylor shifts and monomial evaluation are precomputed.
    """

    def __init__(self, m, n):
        self.m = m
        self.n = n
        self.alphas = multiindices(m, n)
        self.D = len(self.alphas)
        self.index = {a: i for i, a in enumerate(self.alphas)}
        self.orders = np.array([sum(a) for a in self.alphas])
        self.fact = np.array([_factorial_mi(a) for a in self.alphas], dtype=float)
        # product table: d^g(PR) = sum_{a+b=g} g!/(a! b!) d^a P d^b R
        tab = []
        for g in self.alphas:
            for a in self.alphas:
                b = tuple(gi - ai for gi, ai in zip(g, a))
                if min(b) < 0:
                    continue
                w = _factorial_mi(g) / (_factorial_mi(a) * _factorial_mi(b))
                tab.append((self.index[g], self.index[a], self.index[b], w))
        self._prod = np.array(tab)

    def multiply(self, u, v):
        """Truncated product of two jets at a common basepoint."""
        out = np.zeros(self.D)
        gi = self._prod[:, 0].astype(int)
        ai = self._prod[:, 1].astype(int)
        bi = self._prod[:, 2].astype(int)
        np.add.at(out, gi, self._prod[:, 3] * np.asarray(u)[ai] * np.asarray(v)[bi])
        return out

    def shift_matrix(self, h):
        """Matrix S with (S u)_alpha = d^alpha P(x0 + h) for u_alpha = d^alpha P(x0)."""
        h = np.asarray(h, dtype=float)
        S = np.zeros((self.D, self.D))
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.alphas):
                g = tuple(bi - ai for ai, bi in zip(a, b))
                if min(g) < 0:
                    continue
                S[i, j] = _monomial(h, g) / _factorial_mi(g)
        return S

    def eval_row(self, dx):
        """Row r with r . u = P(x0 + dx) for jet coefficients u at x0."""
        dx = np.asarray(dx, dtype=float)
        return np.array([_monomial(dx, a) / _factorial_mi(a) for a in self.alphas])

    def deriv_eval_row(self, dx, beta):
        """Row r with r . u = d^beta P(x0 + dx)."""
        dx = np.asarray(dx, dtype=float)
        row = np.zeros(self.D)
        for j, b in enumerate(self.alphas):
            g = tuple(bi - bei for bi, bei in zip(b, beta))
            if min(g) < 0:
                continue
            row[j] = _monomial(dx, g) / _factorial_mi(g)
        return row

    def one(self):
        u = np.zeros(self.D)
        u[self.index[(0,) * self.n]] = 1.0
        return u


def _factorial_mi(a):
    out = 1
    for ai in a:
        for k in range(2, ai + 1):
            out *= k
    return out


def _monomial(x, a):
    out = 1.0
    for xi, ai in zip(x, a):
        out *= xi ** ai
    return out


@lru_cache(maxsize=None)
def jet_space(m, n):
    return JetSpace(m, n)


def jet_multiply(m, n, u, v):
    return jet_space(m, n).multiply(u, v)


def jet_translate(m, n, u, x_old, x_new):
    h = np.asarray(x_new, dtype=float) - np.asarray(x_old, dtype=float)
    return jet_space(m, n).shift_matrix(h) @ np.asarray(u, dtype=float)
