"""Independent brute-force and variational oracles used to validate the
equivalence claims at desk scale.

Nothing here shares code with the solver: stencils, minimizers and norms are
written from scratch so the two sides of every band test stay independent.
"""

import numpy as np


def exact_trace_1d(xs, fs, p):
    """Exact trace seminorm for m = 1, n = 1.

    The minimizing extension is affine on each gap (Hoelder equality), giving
    (sum |f_{i+1} - f_i|^p / (x_{i+1} - x_i)^(p-1))^(1/p); derivation in
    demos/demo_oracles.py.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    fs = np.asarray(fs, dtype=float).reshape(-1)
    if p <= 1:
        raise ValueError("p must exceed 1")
    order = np.argsort(xs)
    xs, fs = xs[order], fs[order]
    dx = np.diff(xs)
    if np.any(dx == 0):
        raise ValueError("duplicate abscissae")
    df = np.diff(fs)
    return float(np.sum(np.abs(df) ** p / dx ** (p - 1)) ** (1.0 / p))


def _difference_operator(shape, h, m, n):
    """Sparse m-th order difference rows B and per-row weights c with
    discrete energy = sum_r c_r |B F|_r^p h^n."""
    import scipy.sparse as sp
    G = int(np.prod(shape))
    idx = np.arange(G).reshape(shape)
    rows, cols, vals, cw = [], [], [], []
    rid = 0

    def add_rows(stencil_idx, stencil_w, weight):
        nonlocal rid
        k = len(stencil_idx[0])
        for r in range(k):
            for sidx, w in zip(stencil_idx, stencil_w):
                rows.append(rid)
                cols.append(sidx[r])
                vals.append(w)
            cw.append(weight)
            rid += 1

    if m == 1:
        for ax in range(n):
            lo = np.take(idx, np.arange(shape[ax] - 1), axis=ax).ravel()
            hi = np.take(idx, np.arange(1, shape[ax]), axis=ax).ravel()
            add_rows([lo, hi], [-1.0 / h, 1.0 / h], 1.0)
    elif m == 2:
        for ax in range(n):
            a = np.take(idx, np.arange(shape[ax] - 2), axis=ax).ravel()
            b = np.take(idx, np.arange(1, shape[ax] - 1), axis=ax).ravel()
            c = np.take(idx, np.arange(2, shape[ax]), axis=ax).ravel()
            add_rows([a, b, c], [1.0 / h ** 2, -2.0 / h ** 2, 1.0 / h ** 2], 1.0)
        if n == 2:
            a = idx[:-1, :-1].ravel()
            b = idx[1:, :-1].ravel()
            c = idx[:-1, 1:].ravel()
            d = idx[1:, 1:].ravel()
            add_rows([a, b, c, d],
                     [1.0 / h ** 2, -1.0 / h ** 2, -1.0 / h ** 2, 1.0 / h ** 2], 2.0)
    else:
        raise NotImplementedError("grid oracle supports m <= 2")
    B = sp.csr_matrix((vals, (rows, cols)), shape=(rid, G))
    return B, np.asarray(cw)


def grid_trace(pts, fs, m, n, p, h=None, max_outer=80, tol=1e-9):
    """Grid relaxation surrogate of the trace seminorm: minimize the discrete
    m-th order energy over grid functions pinned (after snapping) to the data.

    Returns (value, value_at_double_h) for a refinement sanity check.
    IRLS outer loop with sparse linear inner solves; snapping moves the
    constraints by at most h/2.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    fs = np.asarray(fs, dtype=float)
    if n not in (1, 2) or len(pts) > 4000:
        raise ValueError("grid oracle supports n <= 2 and modest N")

    def solve(hh):
        pad = 4 * hh if m == 1 else 8 * hh
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        shape = tuple(int(np.ceil((hi[i] - lo[i]) / hh)) + 1 for i in range(n))
        G = int(np.prod(shape))
        if G > 400_000:
            raise ValueError("grid too large; coarsen h")
        flat_idx = np.ravel_multi_index(
            tuple(np.clip(np.round((pts[:, i] - lo[i]) / hh).astype(int), 0,
                          shape[i] - 1) for i in range(n)), shape)
        B, cw = _difference_operator(shape, hh, m, n)
        fixed_mask = np.zeros(G, dtype=bool)
        fixed_mask[flat_idx] = True
        fvals = np.zeros(G)
        fvals[flat_idx] = fs
        free = ~fixed_mask
        Bf = B[:, free]
        Bc = B[:, fixed_mask] @ fvals[fixed_mask]
        w = cw.copy()
        u = None
        val_prev = np.inf
        history = []
        for outer in range(max_outer):
            W = sp.diags(w)
            A = (Bf.T @ W @ Bf).tocsc()
            rhs = -Bf.T @ (w * Bc)
            try:
                u = spla.spsolve(A + 1e-12 * sp.eye(A.shape[0]), rhs)
            except Exception:
                u, _ = spla.cg(A + 1e-10 * sp.eye(A.shape[0]), rhs, rtol=1e-10,
                               maxiter=2000)
            r = Bf @ u + Bc
            val = float(np.sum(cw * np.abs(r) ** p) * hh ** n)
            history.append(val)
            if abs(val_prev - val) <= tol * max(val, 1e-300):
                break
            val_prev = val
            eps_r = max(1e-12 * np.max(np.abs(r), initial=1e-30), 1e-300)
            w = cw * (r * r + eps_r ** 2) ** (p / 2.0 - 1.0) * hh ** n
        if val_prev is np.inf or not history:
            raise ArithmeticError("grid relaxation failed to converge")
        return history[-1] ** (1.0 / p)

    if h is None:
        gaps = None
        if len(pts) > 1:
            from scipy.spatial import cKDTree
            t = cKDTree(pts)
            d, _ = t.query(pts, k=2, p=np.inf)
            gaps = np.min(d[:, 1])
        h = max(gaps / 4.0 if gaps else 1.0 / 16,
                np.max(pts.max(0) - pts.min(0)) / 96 + 1e-12)
    return solve(h), solve(2 * h)


def brute_lp_min(a, y, p, iters=500, tol=1e-10, damping=0.5):
    """IRLS minimizer of sum_l |y_l + (a x)_l|^p with golden-section polish
    for scalar problems; returns (x, value, kkt_residual)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    y = np.asarray(y, dtype=float)
    L, J = a.shape
    x = np.zeros(J)
    if J == 1:
        # golden-section on the scalar objective after IRLS warm start
        def obj(t):
            return np.sum(np.abs(y + a[:, 0] * t) ** p)
        x0 = _irls(a, y, p, iters, tol, damping)[0]
        lo, hi = x0 - 1.0 - abs(x0), x0 + 1.0 + abs(x0)
        phi = (np.sqrt(5) - 1) / 2
        c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
        for _ in range(200):
            if obj(c) < obj(d):
                hi = d
            else:
                lo = c
            c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
        x = np.array([(lo + hi) / 2])
    else:
        x = _irls(a, y, p, iters, tol, damping)
    r = y + a @ x
    grad = p * a.T @ (np.abs(r) ** (p - 1) * np.sign(r))
    return x, float(np.sum(np.abs(r) ** p)), float(np.max(np.abs(grad)))


def _irls(a, y, p, iters, tol, damping):
    L, J = a.shape
    x = np.linalg.lstsq(a, -y, rcond=None)[0]
    eps = 1.0
    for it in range(iters):
        r = y + a @ x
        w = (r * r + eps) ** (p / 2.0 - 1.0)
        A = a.T @ (w[:, None] * a)
        b = -a.T @ (w * y)
        try:
            xn = np.linalg.solve(A + 1e-14 * np.eye(J), b)
        except np.linalg.LinAlgError:
            break
        step = damping * (xn - x)
        x = x + step
        eps = max(eps * 0.7, 1e-16)
        if np.max(np.abs(step)) < tol * (1 + np.max(np.abs(x))):
            # fall back to coordinate descent polish if stagnating early
            break
    for _ in range(3 * J):
        for j in range(J):
            col = a[:, j]
            if not np.any(col):
                continue
            def obj(t):
                return np.sum(np.abs(y + a @ x + col * (t - x[j])) ** p)
            lo, hi = x[j] - 1.0, x[j] + 1.0
            phi = (np.sqrt(5) - 1) / 2
            c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
            for _ in range(80):
                if obj(c) < obj(d):
                    hi = d
                else:
                    lo = c
                c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
            x[j] = (lo + hi) / 2
    return x


def brute_sigma_basis(pts, m, n, p, A, jets, eps, delta, x_center, h=None):
    """Tagging surrogate: a grid-relaxation quadratic form sandwiching the
    local convex body, then the direct basis conditions.

    Cubes holding at most one data point are always tagged.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if len(pts) <= 1:
        return True
    # quadratic form q(P) ~ min { grid energy + delta^-2m ||phi - P||^2 }
    # approximated by evaluating the trace of P - interpolant-of-zero data
    from .lpcalc import eta_min_numeric
    D = jets.D
    q = np.zeros((D, D))
    for i in range(D):
        for j in range(D):
            ei = np.zeros(D)
            ej = np.zeros(D)
            ei[i] = 1.0
            ej[j] = 1.0
            q[i, j] = _pair_energy(pts, m, n, p, ei, ej, jets, delta, x_center, h)
    val = eta_min_numeric(q, list(A), jets, p, delta)
    return val <= eps * eps


def _pair_energy(pts, m, n, p, ei, ej, jets, delta, x_center, h):
    def poly(v, x):
        return float(sum(c * np.prod((np.asarray(x) - x_center) ** np.asarray(al))
                         / _fact(al) for c, al in zip(v, jets.alphas)))

    # symmetric bilinear surrogate from constrained grid minimization at p=2
    def energy(v):
        vals = np.array([poly(v, x) for x in pts])
        val, _ = grid_trace(pts, vals, m, n, 2.0, h=h)
        return val ** 2 + delta ** (-2 * m) * np.mean(vals ** 2) * delta ** n

    e_i = energy(ei)
    e_j = energy(ej)
    e_ij = energy(ei + ej)
    return 0.5 * (e_ij - e_i - e_j)


def _fact(al):
    out = 1
    for a in al:
        for k in range(2, a + 1):
            out *= k
    return out
