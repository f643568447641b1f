"""Public solver: fit scattered data, return a trace-norm proxy as an lp sum
of assisted functionals, and answer jet queries for a linear interpolant in
logarithmic time.
"""

import numpy as np

from .constants import default_constants
from .geometry import EGeometry, make_wspd
from .induction import label_chain
from .lpcalc import optimize_via_matrix
from .multiindex import jet_space
from ._splines import ramp_derivs
from .induction import P_CENTER


class BitBudgetError(OverflowError):
    pass


class Chart:
    """Power-of-two affine map taking the raw bounding box into the centered
    1/32 core of the unit cube; coordinates snap to the bit budget."""

    def __init__(self, pts_raw, bits, n, fixed=None):
        pts_raw = np.atleast_2d(np.asarray(pts_raw, dtype=float))
        self.n = n
        self.bits = bits
        if fixed is not None:
            self.offset = np.asarray(fixed[0], dtype=float) * np.ones(n)
            self.h = float(fixed[1])
        else:
            lo = pts_raw.min(axis=0)
            hi = pts_raw.max(axis=0)
            span = float(np.max(hi - lo))
            if span == 0.0:
                span = 1.0
            # h: smallest power of two with raw span <= h/64 (fits in the core)
            self.h = 2.0 ** int(np.ceil(np.log2(64.0 * span)))
            self.offset = np.asarray(lo, dtype=float)
        scaled = (pts_raw - self.offset[None, :]) / self.h + (0.5 - 1.0 / 64.0)
        ints = np.round(scaled * (1 << bits)).astype(np.int64)
        if len(ints) > 1:
            from scipy.spatial import cKDTree
            t = cKDTree(ints)
            d, _ = t.query(ints, k=2, p=np.inf)
            if np.min(d[:, 1]) < 16:
                raise BitBudgetError(
                    "points collide at the configured bit budget; raise bits")
        self.ints = ints

    def to_unit(self, x_raw):
        x_raw = np.asarray(x_raw, dtype=float)
        return (x_raw - self.offset) / self.h + (0.5 - 1.0 / 64.0)

    def from_unit(self, x_unit):
        x_unit = np.asarray(x_unit, dtype=float)
        return self.offset + (x_unit - (0.5 - 1.0 / 64.0)) * self.h

    def jet_factor(self, orders):
        """Chain-rule factors h^-|alpha| turning unit-chart jets into raw jets."""
        return self.h ** (-np.asarray(orders, dtype=float))


class LinMapX:
    """Jet-valued linear map of (f, P): D rows, each a sparse functional plus
    a dense P-row; the jet basepoint is implicit (the query point)."""

    __slots__ = ("pmat", "rows")

    def __init__(self, D):
        self.pmat = np.zeros((D, D))
        self.rows = [dict() for _ in range(D)]

    def add_scaled(self, other, W):
        """self += W @ other for a (D, D) weight matrix."""
        self.pmat += W @ other.pmat
        for g in range(len(self.rows)):
            row = self.rows[g]
            for b in range(W.shape[1]):
                w = W[g, b]
                if w == 0.0:
                    continue
                for k, c in other.rows[b].items():
                    row[k] = row.get(k, 0.0) + w * c

    def substitute_P(self, rmap_pmat, rmap_rows):
        """Return the map (f, P) -> self(f, R(f, P)) for R given row-wise."""
        out = LinMapX(len(self.rows))
        out.pmat = self.pmat @ rmap_pmat
        for g in range(len(self.rows)):
            out.rows[g] = dict(self.rows[g])
            for b in range(len(self.rows)):
                w = self.pmat[g, b]
                if w == 0.0:
                    continue
                for k, c in rmap_rows[b].items():
                    out.rows[g][k] = out.rows[g].get(k, 0.0) + w * c
        return out

    def evaluate(self, f, assist_vals, Pvec):
        out = self.pmat @ Pvec
        for g, row in enumerate(self.rows):
            for (kind, i), c in row.items():
                out[g] += c * (f[i] if kind == "f" else assist_vals[i])
        return out


def _poly_map_at(jets, x, rmap=None):
    """LinMapX of (f, P) -> jet at x of R(f, P) (identity R when None)."""
    D = jets.D
    out = LinMapX(D)
    rows_template = [jets.deriv_eval_row(np.asarray(x, dtype=float) - P_CENTER, beta)
                     for beta in jets.alphas]
    if rmap is None:
        out.pmat = np.asarray(rows_template)
        return out
    out.pmat = np.asarray(rows_template) @ rmap.pmat
    for g, trow in enumerate(rows_template):
        for r, w in enumerate(trow):
            if w == 0.0:
                continue
            ri, rc = rmap.rows_a[r]
            for j, c in zip(ri, rc):
                out.rows[g][("a", j)] = out.rows[g].get(("a", j), 0.0) + w * c
    return out


class Artifacts:
    """Everything the queries need: the label chain, assists, functionals,
    the near-optimal-jet matrix and the chart."""

    def __init__(self, chart, geom, states, pool, rj_rows, rj_assist_base,
                 consts, jets, p, space):
        self.chart = chart
        self.geom = geom
        self.states = states
        self.pool = pool
        self.rj_rows = rj_rows            # (D, L) matrix onto final functionals
        self.rj_assist_base = rj_assist_base
        self.consts = consts
        self.jets = jets
        self.p = p
        self.space = space
        self.N = geom.N

    @property
    def points_raw(self):
        """The solver's exact data locations: the snapped coordinates mapped
        back to raw units (the problem actually solved)."""
        return self.chart.from_unit(self.geom.coords_int / (1 << self.chart.bits))

    # -- functional side ------------------------------------------------------
    def assist_values(self, f):
        """Assist values, cached per data vector (computed once per f).

        The cache key is an O(1) fingerprint (identity, shape, and boundary
        samples), so repeated queries against the same f stay logarithmic.
        """
        f = np.asarray(f, dtype=float)
        k = len(f)
        key = (id(f), k,
               float(f[0]) if k else 0.0,
               float(f[-1]) if k else 0.0,
               float(f[k // 2]) if k else 0.0)
        cache = getattr(self, "_assist_cache", None)
        if cache is not None and cache[0] == key:
            return cache[1]
        vals = self.pool.evaluate(f)
        self._assist_cache = (key, vals)
        return vals

    def rjet(self, f, assist_vals):
        """Jet coefficients at the origin of the near-optimal polynomial."""
        D = self.jets.D
        return assist_vals[self.rj_assist_base: self.rj_assist_base + D]

    def functional_values(self, f, Pvec_override=None):
        f = np.asarray(f, dtype=float)
        av = self.assist_values(f)
        if Pvec_override is not None:
            Pvec = Pvec_override
        elif self.space == "homogeneous":
            Pvec = self.rjet(f, av)
        else:
            Pvec = np.zeros(self.jets.D)
        return self.states[-1].xi.evaluate(f, av, Pvec)

    def norm_proxy(self, f):
        vals = self.functional_values(f)
        raw_factor = self.chart.h ** (self.jets.n / self.p - self.jets.m)
        return float(np.sum(np.abs(vals) ** self.p) ** (1.0 / self.p)) * raw_factor

    # -- jet side -------------------------------------------------------------
    def _adjacency(self, part):
        key = id(part)
        if not hasattr(self, "_adj_cache"):
            self._adj_cache = {}
        if key not in self._adj_cache:
            from .czdecomp import touching_pairs
            pairs = touching_pairs(part)
            order = np.argsort(pairs[:, 0], kind="stable") if len(pairs) else []
            pairs = pairs[order] if len(pairs) else pairs
            ptr = np.searchsorted(pairs[:, 0] if len(pairs) else np.zeros(0),
                                  np.arange(len(part) + 1))
            self._adj_cache[key] = (ptr, pairs[:, 1] if len(pairs) else np.zeros(0, int))
        return self._adj_cache[key]

    def _active(self, state, x):
        part = state.part
        xi_int = np.clip((np.asarray(x) * (1 << part.bits)).astype(np.int64),
                         0, (1 << part.bits) - 1)
        home = part.locate_points(xi_int[None, :])[0]
        if home < 0:
            return []
        ptr, adj = self._adjacency(part)
        cand = [int(home)] + [int(j) for j in adj[ptr[home]: ptr[home + 1]]]
        r = state.a_const
        out = []
        scale = float(1 << part.bits)
        for q in cand:
            c = part.corner[q] / scale
            s = part.side[q] / scale
            if np.all(np.abs(np.asarray(x) - (c + s / 2.0)) < s * (1 + 0.75 * r) / 2.0):
                out.append(int(q))
        return out

    def _pou_jets(self, state, members, x):
        from .czdecomp import PartitionOfUnity
        part = state.part
        pou = PartitionOfUnity(part.corner[members], part.level[members],
                               part.bits, self.jets, r=state.a_const)
        act = [k for k in range(len(members)) if pou.support_contains(k, x)]
        jets = pou.cutoff_jets(act, x)
        return [members[k] for k in act], jets

    def _level_maps(self, x):
        """Bottom-up maps (f, P) -> jet at x of the per-cube extensions."""
        jets = self.jets
        states = [s for s in self.states if s.kind != "copy"]
        maps = {}
        st0 = states[0]
        for q in self._active(st0, x):
            rnk = st0.main_rank[q]
            mp = LinMapX(jets.D)
            rows = np.asarray([jets.deriv_eval_row(np.asarray(x, dtype=float) - P_CENTER, b)
                               for b in jets.alphas])
            mp.pmat = rows.copy()
            if rnk >= 0:
                rep = st0.main_rep[rnk]
                xq = self.geom.coords_int[rep] / (1 << st0.part.bits)
                erow = jets.eval_row(xq - P_CENTER)
                mp.pmat[0] -= erow
                mp.rows[0][("f", int(rep))] = 1.0
            maps[(0, q)] = mp
        for li, st in enumerate(states[1:], start=1):
            prev = st.prev
            while prev.kind == "copy":
                prev = prev.prev
            scale = float(1 << st.part.bits)
            for qhat in self._active(st, x):
                rnk = st.main_rank[qhat]
                if rnk < 0:
                    continue
                shat = st.part.side[qhat] / scale
                cov = st.covering[rnk]
                members, theta = self._pou_jets_covering(prev, cov, x)
                acc = LinMapX(jets.D)
                for q, th in zip(members, theta):
                    sq = prev.part.side[q] / scale
                    rmap = None
                    if not st.simple[rnk]:
                        rmap = st.rmap_for(q, sq, shat)
                    inner = maps.get((li - 1, int(q)))
                    if inner is None:
                        Fq = _poly_map_at(jets, x, rmap)
                    elif rmap is None:
                        Fq = inner
                    else:
                        rows = [dict() for _ in range(jets.D)]
                        for r in range(jets.D):
                            ri, rc = rmap.rows_a[r]
                            rows[r] = {("a", j): c for j, c in zip(ri, rc)}
                        Fq = inner.substitute_P(rmap.pmat, rows)
                    W = jets_mult_matrix(jets, th)
                    acc.add_scaled(Fq, W)
                maps[(li, qhat)] = acc
        return states, maps

    def _pou_jets_covering(self, prev_state, cov, x):
        from .czdecomp import PartitionOfUnity
        part = prev_state.part
        # only cubes whose support reaches x can matter; they all touch the
        # home cube, so the adjacency shortlist is complete
        short = np.asarray(self._active(prev_state, x), dtype=np.int64)
        if len(short):
            pos = np.searchsorted(cov, short)
            pos = np.minimum(pos, len(cov) - 1)
            sel = short[cov[pos] == short]
        else:
            sel = short
        if not len(sel):
            return [], []
        pou = PartitionOfUnity(part.corner[sel], part.level[sel], part.bits,
                               self.jets, r=prev_state.a_const)
        act = [k for k in range(len(sel)) if pou.support_contains(k, x)]
        jets_list = pou.cutoff_jets(act, x)
        return [int(sel[k]) for k in act], jets_list

    def t_circle_map(self, x):
        """(f, P) -> jet at x of the unit-cube extension (the global glued sum)."""
        jets = self.jets
        states, maps = self._level_maps(x)
        top = states[-1]
        li = len(states) - 1
        members, theta = self._pou_jets(top, self._active(top, x) or
                                        [int(top.part.locate_points(np.clip(
                                            (np.asarray(x) * (1 << top.part.bits)).astype(np.int64),
                                            0, (1 << top.part.bits) - 1)[None, :])[0])], x)
        acc = LinMapX(jets.D)
        for q, th in zip(members, theta):
            inner = maps.get((li, int(q)))
            Fq = inner if inner is not None else _poly_map_at(jets, x, None)
            acc.add_scaled(Fq, jets_mult_matrix(jets, th))
        return acc

    def query_jet_unit(self, x_unit, f=None, Pvec_override=None):
        """Jet (coefficients at x, unit chart) of the interpolant; returns the
        map when f is None, the numeric jet otherwise."""
        jets = self.jets
        x = np.asarray(x_unit, dtype=float)
        D = jets.D
        inside = np.all(x >= 0) and np.all(x < 1)
        f_arr = None if f is None else np.asarray(f, dtype=float)
        av = None if f is None else self.assist_values(f_arr)
        if self.space == "homogeneous":
            Pvec = None if f is None else self.rjet(f_arr, av)
        else:
            Pvec = np.zeros(D)
        if Pvec_override is not None:
            Pvec = Pvec_override
        # outside the unit frame the extension equals its polynomial branch
        theta0 = _theta_core_jet(jets, x)
        if not inside:
            if self.space == "homogeneous":
                rows = np.asarray([jets.deriv_eval_row(x - P_CENTER, b) for b in jets.alphas])
                return rows @ Pvec
            return np.zeros(D)
        tmap = self.t_circle_map(x)
        if self.space == "homogeneous":
            # theta0 * T0(f, R) + (1 - theta0) * R
            vals_t = tmap.evaluate(f_arr, av, Pvec)
            rows = np.asarray([jets.deriv_eval_row(x - P_CENTER, b) for b in jets.alphas])
            vals_r = rows @ Pvec
            W = jets_mult_matrix(jets, theta0)
            one = jets.one()
            Wc = jets_mult_matrix(jets, one - theta0)
            return W @ vals_t + Wc @ vals_r
        vals_t = tmap.evaluate(f_arr, av, np.zeros(D))
        W = jets_mult_matrix(jets, theta0)
        return W @ vals_t

    def query_jet(self, f, x_raw):
        x = self.chart.to_unit(np.asarray(x_raw, dtype=float))
        jet_unit = self.query_jet_unit(x, f=f)
        return jet_unit * self.chart.jet_factor(self.jets.orders)

    def query_functionals(self, x_raw):
        """Short-form rows of f -> d^alpha (Tf)(x_raw): per row a dict of point
        terms, assist terms, and coefficients against the optimal-jet rows."""
        x = self.chart.to_unit(np.asarray(x_raw, dtype=float))
        jets = self.jets
        D = jets.D
        inside = np.all(x >= 0) and np.all(x < 1)
        rows_eval = np.asarray([jets.deriv_eval_row(x - P_CENTER, b) for b in jets.alphas])
        factors = self.chart.jet_factor(jets.orders)
        out = []
        if not inside:
            for g in range(D):
                out.append({"points": {}, "assists": {},
                            "rjet": rows_eval[g] * factors[g]})
            return out
        tmap = self.t_circle_map(x)
        theta0 = _theta_core_jet(jets, x)
        W = jets_mult_matrix(jets, theta0)
        Wc = jets_mult_matrix(jets, jets.one() - theta0)
        full_p = W @ tmap.pmat + Wc @ rows_eval
        for g in range(D):
            pts, asst = {}, {}
            for b in range(D):
                w = W[g, b]
                if w == 0.0:
                    continue
                for (kind, i), c in tmap.rows[b].items():
                    d = pts if kind == "f" else asst
                    d[i] = d.get(i, 0.0) + w * c
            out.append({"points": {k: v * factors[g] for k, v in pts.items()},
                        "assists": {k: v * factors[g] for k, v in asst.items()},
                        "rjet": full_p[g] * factors[g]})
        return out


def jets_mult_matrix(jets, u):
    """Matrix W with jets.multiply(u, v) == W @ v."""
    W = np.zeros((jets.D, jets.D))
    tab = jets._prod
    gi = tab[:, 0].astype(int)
    ai = tab[:, 1].astype(int)
    bi = tab[:, 2].astype(int)
    np.add.at(W, (gi, bi), tab[:, 3] * np.asarray(u)[ai])
    return W


def _theta_core_jet(jets, x):
    """Jet of the chart cutoff: 1 on the 1/32 core, 0 outside the unit cube."""
    m, n = jets.m, jets.n
    per_axis = []
    for i in range(n):
        up = ramp_derivs(m, float(x[i]), 0.0, 0.5 - 1.0 / 64, m)
        down = ramp_derivs(m, 1.0 - float(x[i]), 0.0, 0.5 - 1.0 / 64, m)
        prod = np.zeros(m + 1)
        # product rule on the two one-sided ramps (down has sign flips)
        for k in range(m + 1):
            v = 0.0
            from math import comb
            for a in range(k + 1):
                v += comb(k, a) * up[a] * down[k - a] * (-1.0) ** (k - a)
            prod[k] = v
        per_axis.append(prod)
    out = np.empty(jets.D)
    for k, alpha in enumerate(jets.alphas):
        v = 1.0
        for i, ai in enumerate(alpha):
            v *= per_axis[i][ai]
        out[k] = v
    return out


def solve_homogeneous(pts_raw, m, n, p, consts=None, fixed_chart=None):
    """Fit artifacts for the homogeneous-seminorm problem: proxy functionals
    plus a jet-queryable linear interpolant."""
    if p <= n:
        raise ValueError("the Sobolev range requires p > n")
    consts = consts or default_constants(n, p)
    pts_raw = np.atleast_2d(np.asarray(pts_raw, dtype=float))
    N = len(pts_raw)
    if N < 2:
        raise ValueError("homogeneous solve needs at least two points")
    chart = Chart(pts_raw, consts.bits, n, fixed=fixed_chart)
    geom = EGeometry(chart.ints, consts.bits)
    jets = jet_space(m, n)
    pairs = None
    if m >= 2:
        pairs = make_wspd(geom.coords, separation=4.0)
    states = label_chain(geom, jets, p, consts, wspd_pairs=pairs)
    final = states[-1]
    # near-optimal jet: linear rule minimizing the lp mass over polynomials
    Pm = final.xi.ppart_matrix()
    b = optimize_via_matrix(Pm, p)                 # (D, L)
    pool = final.pool
    base = len(pool)
    for al in range(jets.D):
        acc = {}
        for l, c in enumerate(b[al]):
            if c == 0.0:
                continue
            fi, fc = final.xi.fp_row(l)
            for i, w in zip(fi, fc):
                acc[i] = acc.get(i, 0.0) + c * w
            ai, ac = final.xi.ap_row(l)
            for j, w in zip(ai, ac):
                ii, cc = pool.expand_row(j)
                for i2, w2 in zip(ii, cc):
                    acc[i2] = acc.get(i2, 0.0) + c * w * w2
        pool.add(list(acc.keys()), list(acc.values()))
    return Artifacts(chart, geom, states, pool, b, base, consts, jets, p,
                     "homogeneous")


_LATTICE_SHIFT = 2.0 ** -10
_CORE_MARGIN = 2.0 ** -8


def _core_key(x, n):
    """Canonical lattice core of a point: cores of side 1/2 tile space at the
    shifted half-integer grid."""
    return tuple(int(v) for v in
                 np.floor(2.0 * (np.asarray(x) - _LATTICE_SHIFT)).astype(np.int64))


def _cell_cutoff_jet(jets, x, key):
    """Normalized bump of the cell around core `key`: 1 on the core, zero
    beyond the margin; cores tile space so the bump sum is at least 1."""
    m, n = jets.m, jets.n
    x = np.asarray(x, dtype=float)
    base = _core_key(x, n)
    from ._splines import tensor_bump_jet, reciprocal_jet
    neigh = []
    for off in range(3 ** n):
        d = []
        o = off
        for _ in range(n):
            d.append(o % 3 - 1)
            o //= 3
        neigh.append(tuple(b + dd for b, dd in zip(base, d)))
    if key not in neigh:
        return np.zeros(jets.D)
    bumps = []
    for kk in neigh:
        center = (np.asarray(kk, dtype=float) + 0.5) * 0.5 + _LATTICE_SHIFT
        bumps.append(tensor_bump_jet(m, n, jets, x, center,
                                     np.full(n, 0.25), np.full(n, 0.25 + _CORE_MARGIN)))
    tot = np.sum(bumps, axis=0)
    inv = reciprocal_jet(n, jets, tot)
    return jets.multiply(bumps[neigh.index(key)], inv)


class InhomArtifacts:
    """Lattice-of-cells wrapper for the inhomogeneous norm: each core cell
    solves its own zero-polynomial problem on a fixed-size chart."""

    def __init__(self, cells, m, n, p, consts):
        self.cells = dict(cells)   # key -> (kind, payload)
        self.m, self.n, self.p = m, n, p
        self.jets = jet_space(m, n)
        self.consts = consts
        self.space = "inhomogeneous"

    def norm_proxy(self, f):
        f = np.asarray(f, dtype=float)
        total = 0.0
        for key, (kind, payload) in self.cells.items():
            if kind == "solve":
                art, members = payload
                vals = art.functional_values(f[members],
                                             Pvec_override=np.zeros(self.jets.D))
                h = art.chart.h
                # seminorm part in raw units plus the raw L^p mass
                total += float(np.sum(np.abs(vals) ** self.p)) \
                    * h ** (self.n - self.m * self.p)
            else:
                member = payload[0]
                total += abs(float(f[member])) ** self.p
        return total ** (1.0 / self.p)

    def query_jet(self, f, x_raw):
        x = np.asarray(x_raw, dtype=float)
        f = np.asarray(f, dtype=float)
        jets = self.jets
        out = np.zeros(jets.D)
        for key, (kind, payload) in self.cells.items():
            w_j = _cell_cutoff_jet(jets, x, key)
            if not np.any(w_j):
                continue
            if kind == "solve":
                art, members = payload
                xu = art.chart.to_unit(x)
                if np.all(xu >= 0) and np.all(xu < 1):
                    # the cell extension pins the polynomial input to zero
                    ju = art.query_jet_unit(xu, f=f[members],
                                            Pvec_override=np.zeros(jets.D))
                    jraw = ju * art.chart.jet_factor(jets.orders)
                else:
                    jraw = np.zeros(jets.D)
            else:
                member, x0 = payload
                from ._splines import tensor_bump_jet
                jraw = float(f[member]) * tensor_bump_jet(
                    jets.m, jets.n, jets, x, np.asarray(x0, dtype=float),
                    np.full(jets.n, 1.0 / 16), np.full(jets.n, 1.0 / 8))
            out += jets.multiply(w_j, jraw)
        return out


def solve_inhomogeneous(pts_raw, m, n, p, consts=None):
    """Cell-by-cell solve for the inhomogeneous norm; handles empty and
    singleton data."""
    if p <= n:
        raise ValueError("the Sobolev range requires p > n")
    consts = consts or default_constants(n, p)
    pts_raw = np.atleast_2d(np.asarray(pts_raw, dtype=float)) if np.size(pts_raw) \
        else np.zeros((0, n))
    cores = {}
    for i, x in enumerate(pts_raw):
        cores.setdefault(_core_key(x, n), []).append(i)
    # each cell gathers its core points plus margin-hugging neighbors
    cells = {}
    for key, members in cores.items():
        gathered = set(members)
        center = (np.asarray(key, dtype=float) + 0.5) * 0.5 + _LATTICE_SHIFT
        for i, x in enumerate(pts_raw):
            if np.all(np.abs(np.asarray(x) - center) < 0.25 + _CORE_MARGIN):
                gathered.add(i)
        cells[key] = np.asarray(sorted(gathered), dtype=np.int64)
    out = {}
    for key, members in sorted(cells.items()):
        center = (np.asarray(key, dtype=float) + 0.5) * 0.5 + _LATTICE_SHIFT
        if len(members) == 1:
            i = int(members[0])
            out[key] = ("point", (i, pts_raw[i]))
        else:
            # fixed cell frame: the cell center lands at the chart core center
            sub = solve_homogeneous(
                pts_raw[members], m, n, p, consts=consts,
                fixed_chart=(center - 0.5, 32.0))
            out[key] = ("solve", (sub, members))
    return InhomArtifacts(out, m, n, p, consts)


def norm_proxy(artifacts, f):
    return artifacts.norm_proxy(f)


def query_jet(artifacts, f, x_raw):
    return artifacts.query_jet(f, x_raw)


def query_functionals(artifacts, x_raw, alpha=None):
    rows = artifacts.query_functionals(x_raw)
    if alpha is None:
        return rows
    return rows[artifacts.jets.index[tuple(alpha)]]
