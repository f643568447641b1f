"""lp-norm kernels: norm compression, approximate lp minimization via a
precomputed matrix, and the piecewise-monomial resolution of the basis-fitting
threshold eta_min(delta).

Exponents of delta always have the exact form mu + nu/p with integer mu, nu;
they are stored as integer pairs and compared exactly (p is carried as a
Fraction), never by float subtraction.
"""

from fractions import Fraction

import numpy as np


class RobustnessError(ArithmeticError):
    """Numerically singular leading coefficients; advise Delta_g regularization."""


# ---------------------------------------------------------------------------
# Compress Norms

def compress_norms(mu, p):
    """Reduce L functionals on R^D to D functionals with lp-equivalent mass.

    Returns a (D, D) array `mus` with c * sum_i |mus[i] . v|^p <= sum_l
    |mu[l] . v|^p <= C * sum_i |mus[i] . v|^p for constants depending on D, p
    only.  All-zero input yields zero functionals.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    L, D = mu.shape
    out = np.zeros((D, D))
    work = mu
    for d in range(D - 1, 0, -1):
        # work: (L, d+1): split off the last coordinate
        a = work[:, d]
        beta = np.abs(a)
        s = np.sign(a)
        s[s == 0] = 1.0
        tilde = -(s[:, None] * work[:, :d])
        B = float(np.sum(beta ** p))
        if B == 0.0:
            work = work[:, :d]
            continue
        bar = (beta ** (p - 1))[None, :] @ tilde / B  # (1, d)
        row = np.zeros(D)
        row[d] = B ** (1.0 / p)
        row[:d] = -(B ** (1.0 / p)) * bar[0]
        out[d] = row
        work = beta[:, None] * bar - tilde            # residuals on R^d
    # base case D=1 on the remaining single column
    col = work[:, 0]
    out[0, 0] = float(np.sum(np.abs(col) ** p)) ** (1.0 / p)
    return out


def compress_norms_batched(mu, group_ptr, p):
    """compress_norms applied independently to groups mu[ptr[g]:ptr[g+1]].

    Returns (G, D, D); groups may be empty (zero functionals).
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    T, D = mu.shape
    ptr = np.asarray(group_ptr, dtype=np.int64)
    G = len(ptr) - 1
    out = np.zeros((G, D, D))
    if T == 0:
        return out
    gid = np.repeat(np.arange(G), np.diff(ptr))
    work = mu
    keep = np.ones(T, dtype=bool)

    def seg_sum(v):
        tot = np.zeros(G)
        np.add.at(tot, gid, v)
        return tot

    for d in range(D - 1, 0, -1):
        a = work[:, d]
        beta = np.abs(a)
        s = np.where(a < 0, -1.0, 1.0)
        tilde = -(s[:, None] * work[:, :d])
        B = seg_sum(beta ** p)
        nz = B > 0
        w = beta ** (p - 1)
        bar = np.zeros((G, d))
        for c in range(d):
            bar[:, c] = seg_sum(w * tilde[:, c])
        bar[nz] /= B[nz, None]
        amp = np.zeros(G)
        amp[nz] = B[nz] ** (1.0 / p)
        out[:, d, d] = amp
        out[:, d, :d] = -amp[:, None] * bar
        work = beta[:, None] * bar[gid] - tilde
    col = work[:, 0]
    out[:, 0, 0] = seg_sum(np.abs(col) ** p) ** (1.0 / p)
    return out


# ---------------------------------------------------------------------------
# Optimize via Matrix

def optimize_via_matrix(a, p, equilibrate=True):
    """Matrix b (J, L) with x* = b @ y a C1(J,p)-near minimizer of
    sum_l |y_l + sum_j a_{lj} x_j|^p; exact minimizer at p = 2.

    Zero columns are harmless (any choice works); recursion eliminates the
    last variable through the scalar rule |a|^{p-1} sgn(a).  Columns are
    rescaled to unit size first (a pure reparametrization of the x variables)
    so wildly mixed scales do not poison the elimination.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    L, J = a.shape
    if equilibrate:
        s = np.max(np.abs(a), axis=0)
        s[s == 0.0] = 1.0
        b = optimize_via_matrix(a / s[None, :], p, equilibrate=False)
        return b / s[:, None]

    def scalar_rule(col):
        S = np.sum(np.abs(col) ** p)
        if S == 0.0:
            return np.zeros(L)
        return -(np.abs(col) ** (p - 1)) * np.sign(col) / S

    if J == 1:
        return scalar_rule(a[:, 0])[None, :]
    bh = optimize_via_matrix(a[:, : J - 1], p, equilibrate=False)  # (J-1, L)
    g = bh @ a[:, J - 1]                            # (J-1,)
    h = a[:, J - 1] + a[:, : J - 1] @ g             # (L,)
    gamma = scalar_rule(h)                          # (L,)
    delta = gamma @ a[:, : J - 1]                   # (J-1,)
    bJ = gamma + delta @ bh                         # (L,)
    btop = bh + np.outer(g, bJ)
    return np.vstack([btop, bJ[None, :]])


# ---------------------------------------------------------------------------
# symbolic eta_min and its piecewise-monomial approximation

class ExpoPoly:
    """Polynomial in eps and delta^(mu + nu/p): {(k_eps, mu, nu): coeff}."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = dict(terms or {})

    @classmethod
    def const(cls, c, k_eps=0, mu=0, nu=0):
        return cls({(k_eps, mu, nu): float(c)} if c != 0 else {})

    def __add__(self, other):
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0.0) + v
        return ExpoPoly({k: v for k, v in t.items() if v != 0.0})

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return ExpoPoly({k: c * v for k, v in self.terms.items()})

    def __mul__(self, other):
        t = {}
        for (k1, m1, n1), v1 in self.terms.items():
            for (k2, m2, n2), v2 in other.terms.items():
                key = (k1 + k2, m1 + m2, n1 + n2)
                t[key] = t.get(key, 0.0) + v1 * v2
        return ExpoPoly({k: v for k, v in t.items() if v != 0.0})

    def is_zero(self, tol=0.0):
        if not self.terms:
            return True
        mx = max(abs(v) for v in self.terms.values())
        return mx <= tol

    def eps_order(self):
        return min(k for (k, _, _) in self.terms) if self.terms else None

    def at_eps_order(self, k0):
        return {(m, n): v for (k, m, n), v in self.terms.items() if k == k0}

    def prune(self, rel=1e-13):
        if not self.terms:
            return self
        mx = max(abs(v) for v in self.terms.values())
        return ExpoPoly({k: v for k, v in self.terms.items() if abs(v) > rel * mx})


def _merge_delta_terms(dterms, p_frac):
    """Collapse (mu, nu) keys with exactly equal exponents mu + nu/p."""
    buckets = {}
    for (m, n), v in dterms.items():
        lam = Fraction(m) + Fraction(n) / p_frac
        key = lam
        if key in buckets:
            buckets[key] = (buckets[key][0], buckets[key][1] + v)
        else:
            buckets[key] = ((m, n), v)
    out = {}
    for lam, ((m, n), v) in buckets.items():
        if v != 0.0:
            out[(m, n)] = v
    return out


def _det_adj(mat):
    """Symbolic determinant and adjugate of a small matrix of ExpoPolys."""
    J = len(mat)
    if J == 0:
        return ExpoPoly.const(1.0), []
    if J == 1:
        return mat[0][0], [[ExpoPoly.const(1.0)]]
    import itertools
    det = ExpoPoly()
    for perm in itertools.permutations(range(J)):
        sign = 1.0
        seen = list(perm)
        # permutation sign by counting inversions
        inv = sum(1 for i in range(J) for j in range(i + 1, J) if seen[i] > seen[j])
        sign = -1.0 if inv % 2 else 1.0
        term = ExpoPoly.const(sign)
        for i in range(J):
            term = term * mat[i][perm[i]]
        det = det + term
    adj = [[None] * J for _ in range(J)]
    for i in range(J):
        for j in range(J):
            rows = [r for r in range(J) if r != j]
            cols = [c for c in range(J) if c != i]
            minor = ExpoPoly()
            for perm in itertools.permutations(range(len(cols))):
                inv = sum(1 for x in range(len(perm)) for y in range(x + 1, len(perm))
                          if perm[x] > perm[y])
                sign = -1.0 if inv % 2 else 1.0
                term = ExpoPoly.const(sign)
                for r_pos, r in enumerate(rows):
                    term = term * mat[r][cols[perm[r_pos]]]
                minor = minor + term
            sgn = -1.0 if (i + j) % 2 else 1.0
            adj[i][j] = minor.scale(sgn)
    return det, adj


def eta_min_symbolic(q, A, jets, p, robust=False, delta_g=0.0):
    """Exact rational form of eta_min(delta) = min over the constrained basis
    family of the weighted quadratic form.

    q: (D, D) PSD matrix in the jet coordinate basis at the base point.
    A: label (iterable of multiindices); jets: the JetSpace for (m, n).
    Returns (num, den): lists of (coeff, mu, nu) with exponents mu + nu/p.
    Raises RobustnessError when the eps -> 0 limit has no well-separated
    leading coefficients (advise delta_g regularization).
    """
    q = np.asarray(q, dtype=float)
    if robust and delta_g > 0:
        q = q + delta_g * np.eye(len(q))
    m, n = jets.m, jets.n
    p_frac = Fraction(p).limit_denominator(10 ** 6)
    A = sorted(set(A), key=lambda a: jets.index[a])
    free = [b for b in jets.alphas if b not in set(A)]
    pairs = [(al, be) for al in A for be in free]   # coordinates w_(al,be)
    J = len(pairs)
    if len(A) == 0:
        return [], [(1.0, 0, 0)]                    # eta_min == 0

    def q_entry(b, g):
        return q[jets.index[b], jets.index[g]]

    # assemble A^delta, b^delta, m^delta as ExpoPolys (no eps yet)
    Amat = [[ExpoPoly() for _ in range(J)] for _ in range(J)]
    bvec = [ExpoPoly() for _ in range(J)]
    mconst = ExpoPoly()
    for al in A:
        e_mu, e_nu = 2 * (m - sum(al)), -2 * n      # delta^(2(m-|al|) - 2n/p)
        mconst = mconst + ExpoPoly.const(q_entry(al, al), 0, e_mu, e_nu)
        for i, (a1, b1) in enumerate(pairs):
            if a1 != al:
                continue
            bvec[i] = bvec[i] + ExpoPoly.const(-q_entry(b1, al), 0, e_mu, e_nu)
            for j, (a2, b2) in enumerate(pairs):
                if a2 != al:
                    continue
                Amat[i][j] = Amat[i][j] + ExpoPoly.const(q_entry(b1, b2), 0, e_mu, e_nu)
    # near-triangularity penalties: (delta^{|b|-|a|} w_(a,b))^2 for b > a
    from .multiindex import multiindex_compare
    for i, (al, be) in enumerate(pairs):
        if multiindex_compare(be, al) > 0:
            Amat[i][i] = Amat[i][i] + ExpoPoly.const(1.0, 0, 2 * (sum(be) - sum(al)), 0)
    # A^{eps,delta} = A + eps I
    for i in range(J):
        Amat[i][i] = Amat[i][i] + ExpoPoly.const(1.0, k_eps=1)

    det, adj = _det_adj(Amat)
    det = det.prune()
    quad = ExpoPoly()
    for i in range(J):
        for j in range(J):
            quad = quad + (bvec[i] * adj[i][j] * bvec[j])
    num = (mconst * det) - quad
    num = num.prune()
    if det.is_zero():
        raise RobustnessError("verschwindende determinant: regularize with delta_g")
    k_den = det.eps_order()
    k_num = num.eps_order()
    if k_num is None:
        num_d = {}
        den_d = det.at_eps_order(k_den)
    else:
        if k_num < k_den:
            raise RobustnessError("eps expansion diverges; regularize with delta_g")
        den_d = det.at_eps_order(k_den)
        num_d = num.at_eps_order(k_den) if k_num == k_den else {}
        if k_num > k_den and not num_d:
            num_d = {}
    den_d = _merge_delta_terms(den_d, p_frac)
    num_d = _merge_delta_terms(num_d, p_frac)
    if not den_d:
        raise RobustnessError("leading eps coefficient of the denominator cancels")
    num_terms = [(v, mu, nu) for (mu, nu), v in sorted(num_d.items())]
    den_terms = [(v, mu, nu) for (mu, nu), v in sorted(den_d.items())]
    return num_terms, den_terms


class PiecewiseMonomial:
    """eta*(delta) = c_k * delta^lam_k on (breaks[k-1], breaks[k]]; breaks
    partition (0, inf) with breaks[-1] implicit = inf."""

    def __init__(self, breaks, coeffs, exps):
        self.breaks = np.asarray(breaks, dtype=float)   # interior breakpoints, increasing
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.exps = np.asarray(exps, dtype=float)
        assert len(self.coeffs) == len(self.breaks) + 1 == len(self.exps)

    @classmethod
    def zero(cls):
        return cls([], [0.0], [0.0])

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=float)
        k = np.searchsorted(self.breaks, delta, side="left")
        return self.coeffs[k] * delta ** self.exps[k]

    @property
    def npieces(self):
        return len(self.coeffs)


def _eval_terms(terms, delta, p):
    return sum(c * delta ** (mu + nu / p) for c, mu, nu in terms)


def approximate_rational(num_terms, den_terms, p, ratio=5.0):
    """Piecewise-monomial eta* with c*eta_min <= eta* <= C*eta_min on (0, inf).

    Bad intervals are where two monomials of the numerator (or denominator)
    are within a factor `ratio` of each other; on good intervals the unique
    dominant monomial pair is used, on bad ones the plug value at the
    log-midpoint.  Colliding exponents (below separation tolerance) are merged
    before the bad set is formed; wide bad intervals are log-refined so the
    piece count stays bounded by the term counts alone.
    """

    def lam_of(mu, nu):
        return mu + nu / p

    def merge(terms):
        out = []
        for c, mu, nu in terms:
            if c == 0.0:
                continue
            lv = lam_of(mu, nu)
            for k, (cc, ll) in enumerate(out):
                if abs(ll - lv) <= 1e-12 * (1 + abs(ll)):
                    out[k] = (cc + c, ll)
                    break
            else:
                out.append((c, lv))
        return [(c, l) for c, l in out if c != 0.0]

    num = merge(num_terms)
    den = merge(den_terms)
    if not num:
        return PiecewiseMonomial.zero()
    if not den:
        raise RobustnessError("empty denominator")

    LO, HI = 1e-30, 1e30

    def bad_endpoints(terms):
        eps = []
        for i in range(len(terms)):
            for j in range(len(terms)):
                if i == j:
                    continue
                ci, li = terms[i]
                cj, lj = terms[j]
                dl = lj - li
                if abs(dl) <= 1e-12:
                    continue
                r = abs(ci / cj)
                for f in (ratio, 1.0 / ratio):
                    with np.errstate(over="ignore"):
                        d = (f * r) ** (1.0 / dl)
                    if np.isfinite(d) and LO < d < HI:
                        eps.append(float(d))
        return eps

    cuts = sorted(set(bad_endpoints(num) + bad_endpoints(den)))

    def dominant(terms, d):
        vals = np.array([abs(c) * d ** l for c, l in terms])
        k = int(np.argmax(vals))
        return k, vals[k] > 2.0 * (vals.sum() - vals[k])

    def mid_of(lo, hi):
        if lo <= 0.0 and np.isinf(hi):
            return 1.0
        if lo <= 0.0:
            return hi / 16.0
        if np.isinf(hi):
            return lo * 16.0
        return float(np.sqrt(lo * hi))

    # refine intervals without a dominant pair, by factors of `ratio`
    edges = [0.0] + cuts + [np.inf]
    refined = [edges[0]]
    for lo, hi in zip(edges, edges[1:]):
        kN, okN = dominant(num, mid_of(lo, hi))
        kD, okD = dominant(den, mid_of(lo, hi))
        if not (okN and okD):
            a = max(lo, LO)
            b = min(hi, HI)
            steps = int(min(96, max(0, np.ceil(2.0 * np.log(b / a) / np.log(ratio)) - 1)))
            for s in range(1, steps + 1):
                refined.append(a * (b / a) ** (s / (steps + 1)))
        refined.append(hi)
    edges = refined

    coeffs, exps = [], []
    for lo, hi in zip(edges, edges[1:]):
        mid = mid_of(lo, hi)
        kN, okN = dominant(num, mid)
        kD, okD = dominant(den, mid)
        if okN and okD:
            c = num[kN][0] / den[kD][0]
            coeffs.append(max(c, 0.0))
            exps.append(num[kN][1] - den[kD][1])
        else:
            v = (sum(c * mid ** l for c, l in num)
                 / sum(c * mid ** l for c, l in den))
            coeffs.append(max(v, 0.0))
            exps.append(0.0)
    # merge adjacent identical pieces
    bks, cs, es = [], [coeffs[0]], [exps[0]]
    for i in range(1, len(coeffs)):
        if coeffs[i] == cs[-1] and exps[i] == es[-1]:
            continue
        bks.append(edges[i])
        cs.append(coeffs[i])
        es.append(exps[i])
    return PiecewiseMonomial(bks, cs, es)


def fit_basis_to_convex_body(q, A, jets, p, robust=False, delta_g=0.0):
    """Piecewise-monomial threshold eta* such that the q-sandwiched body has
    an (A, x, eta^(1/2), delta)-basis iff eta exceeds ~eta*(delta).

    A = empty label gives eta* == 0 (the empty family always works); A = M
    gives the pure constraint value with denominator 1.
    """
    num, den = eta_min_symbolic(q, A, jets, p, robust=robust, delta_g=delta_g)
    return approximate_rational(num, den, p)


def eta_min_numeric(q, A, jets, p, delta):
    """Direct dense minimization of the constrained quadratic at one delta
    (reference path for tests; independent of the symbolic route)."""
    q = np.asarray(q, dtype=float)
    m, n = jets.m, jets.n
    A = sorted(set(A), key=lambda a: jets.index[a])
    if not A:
        return 0.0
    free = [b for b in jets.alphas if b not in set(A)]
    pairs = [(al, be) for al in A for be in free]
    J = len(pairs)
    Amat = np.zeros((J, J))
    bvec = np.zeros(J)
    const = 0.0
    from .multiindex import multiindex_compare
    for al in A:
        w = delta ** (2 * (m - sum(al)) - 2 * n / p)
        const += w * q[jets.index[al], jets.index[al]]
        for i, (a1, b1) in enumerate(pairs):
            if a1 != al:
                continue
            bvec[i] += -w * q[jets.index[b1], jets.index[al]]
            for j, (a2, b2) in enumerate(pairs):
                if a2 == al:
                    Amat[i, j] += w * q[jets.index[b1], jets.index[b2]]
    for i, (al, be) in enumerate(pairs):
        if multiindex_compare(be, al) > 0:
            Amat[i, i] += delta ** (2 * (sum(be) - sum(al)))
    w, _, _, _ = np.linalg.lstsq(Amat, bvec, rcond=None)
    val = const - bvec @ w
    return max(float(val), 0.0)


def basis_check(P_family, sigma_norm, A, jets, eps, delta, p, Lam=None):
    """Numeric verification of (B1)-(B3) (and (B4) when Lam is given).

    P_family: rows of jet coefficients at the base point, indexed like sorted A.
    sigma_norm: callable giving the membership gauge of the convex body.
    """
    from .multiindex import multiindex_compare
    m, n = jets.m, jets.n
    A = sorted(set(A), key=lambda a: jets.index[a])
    for r, al in enumerate(A):
        v = np.asarray(P_family[r], dtype=float)
        if sigma_norm(v) > eps * delta ** (sum(al) + n / p - m) * (1 + 1e-9):
            return False
        for be in A:
            want = 1.0 if be == al else 0.0
            if abs(v[jets.index[be]] - want) > 1e-9:
                return False
        for be in jets.alphas:
            if multiindex_compare(be, al) > 0:
                if abs(v[jets.index[be]]) > eps * delta ** (sum(al) - sum(be)) * (1 + 1e-9):
                    return False
        if Lam is not None:
            for be in jets.alphas:
                if abs(v[jets.index[be]]) > Lam * delta ** (sum(al) - sum(be)) * (1 + 1e-9):
                    return False
    return True
