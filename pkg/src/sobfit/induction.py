"""The per-label induction: starting from the one-point-per-cube base
decomposition, each monotonic label refines lengthscales through keystone
jets, testing functionals and basis-fitting thresholds, producing per-cube
assisted functionals and extension-operator data; non-monotonic labels and
already-coarse decompositions are shared copies.
"""

import numpy as np

from .czdecomp import build_cz, build_whitney, find_main_cubes
from .keystone import KeystoneIndex
from .lpcalc import (compress_norms, compress_norms_batched,
                     fit_basis_to_convex_body, optimize_via_matrix)
from .mortons import CubePartition, encode
from .multiindex import all_labels_sorted, is_monotonic
from .shortform import AssistPool, FunctionalList, RMap


class LabelState:
    def __init__(self, label, kind, part, jets, p, consts, pool):
        self.label = label
        self.kind = kind              # 'base' | 'copy' | 'step'
        self.part = part
        self.jets = jets
        self.p = p
        self.consts = consts
        self.pool = pool
        self.prev = None
        self.a_const = None
        self.main_idx = None          # partition indices of main cubes
        self.main_rank = None         # partition index -> rank in main_idx (-1)
        self.main_rep = None          # data index of x(Q) per main cube
        self.xi = None                # FunctionalList
        self.cube_ptr = None          # per-main-cube slices into xi
        self.kindex = None            # KeystoneIndex on prev.part (steps)
        self.rmaps = None             # keystone partition index -> RMap
        self.covering = None          # per main cube: prev-partition indices
        self.simple = None            # per main cube: c_*-simple flag
        self.t_G = consts.t_G

    def functional_count(self):
        return len(self.xi)

    def rmap_for(self, q_prev, side_prev, side_hat):
        """R-map of a covering cube: identity for comparatively large cubes,
        the keystone jet of K(q) otherwise."""
        if side_prev >= self.t_G * side_hat:
            return None
        R = self.rmaps.get(int(self.kindex.K[q_prev]))
        return None if (R is None or R.trivial) else R


P_CENTER = 0.5  # polynomial coefficients are jets at the chart center


def _eval_row(jets, x):
    return jets.eval_row(np.asarray(x, dtype=float) - P_CENTER)


def _deriv_row(jets, x, beta):
    return jets.deriv_eval_row(np.asarray(x, dtype=float) - P_CENTER, beta)


def base_case(geom, jets, p, consts):
    """The label-M state: one data point per 3-dilate, pointwise functionals."""
    part = build_whitney(geom)
    pool = AssistPool()
    st = LabelState(frozenset(jets.alphas), "base", part, jets, p, consts, pool)
    st.a_const = consts.a_base
    main_idx, reps = find_main_cubes(part, geom)
    st.main_idx = main_idx
    st.main_rep = reps
    st.main_rank = np.full(len(part), -1, dtype=np.int64)
    st.main_rank[main_idx] = np.arange(len(main_idx))
    xi = FunctionalList(jets.D)
    ptr = [0]
    scale = float(1 << part.bits)
    m, n = jets.m, jets.n
    for k, (q, r) in enumerate(zip(main_idx, reps)):
        delta = part.side[q] / scale
        w = delta ** (n / p - m)
        x = geom.coords_int[r] / scale
        xi.add(f_idx=[r], f_coef=[w], ppart=-w * _eval_row(jets, x))
        ptr.append(len(xi))
    st.xi = xi
    st.cube_ptr = np.asarray(ptr)
    return st


def copy_state(prev, label):
    st = LabelState(label, "copy", prev.part, prev.jets, prev.p, prev.consts, prev.pool)
    st.prev = prev
    st.a_const = prev.a_const
    st.main_idx = prev.main_idx
    st.main_rank = prev.main_rank
    st.main_rep = prev.main_rep
    st.xi = prev.xi
    st.cube_ptr = prev.cube_ptr
    st.base = getattr(prev, "base", prev)
    return st


def approximate_old_trace_norm(state):
    """Per main cube, D functionals on polynomials with lp mass comparable to
    the mass of the cube's functional list at f = 0."""
    P = state.xi.ppart_matrix()
    return compress_norms_batched(P, state.cube_ptr, state.p)


def make_keystone_jets(state, A, kindex, pool):
    """Near-minimizing polynomial maps at the keystone cubes, with their new
    point-form assists appended to the pool.  Returns {prev-partition index:
    RMap} and the per-keystone pool lists."""
    jets, p = state.jets, state.p
    D = jets.D
    A = sorted(set(A), key=lambda a: jets.index[a])
    free = [b for b in jets.alphas if b not in set(A)]
    free_pos = [jets.index[b] for b in free]
    fixed_pos = [jets.index[a] for a in A]
    k = len(free)
    main_mask = state.main_rank >= 0
    ks, pools = kindex.pools(main_mask)
    rmaps = {}
    pool_lists = {}
    for r, q_sharp in enumerate(ks):
        members = [int(q) for q in pools[r] if main_mask[q]]
        pool_lists[int(q_sharp)] = members
        rows = []
        for q in members:
            a, b = state.cube_ptr[state.main_rank[q]], state.cube_ptr[state.main_rank[q] + 1]
            rows.extend(range(a, b))
        R = RMap(D)
        if k == 0 or not rows:
            # no freedom or no data influence: keep the input polynomial
            R.trivial = True
            rmaps[int(q_sharp)] = R
            continue
        Pm = state.xi.ppart_matrix()[rows]
        amat = Pm[:, free_pos]                      # (L, k)
        bmat = optimize_via_matrix(amat, p)          # (k, L)
        lam_new = bmat @ Pm[:, fixed_pos]            # (k, #A): P-dependence of w*
        for j, fp in enumerate(free_pos):
            # assemble the point-form assist omega_j by expanding the rows
            acc_idx, acc_coef = {}, None
            acc = {}
            for c, l in zip(bmat[j], rows):
                if c == 0.0:
                    continue
                fi, fc = state.xi.fp_row(l)
                for i, w in zip(fi, fc):
                    acc[i] = acc.get(i, 0.0) + c * w
                ai, ac = state.xi.ap_row(l)
                for jj, w in zip(ai, ac):
                    ii, cc = pool.expand_row(jj)
                    for i2, w2 in zip(ii, cc):
                        acc[i2] = acc.get(i2, 0.0) + c * w * w2
            om = pool.add(list(acc.keys()), list(acc.values()))
            R.pmat[fp, :] = 0.0
            for t, ap in enumerate(fixed_pos):
                R.pmat[fp, ap] = lam_new[j, t]
            R.rows_a[fp] = ([om], [1.0])
        rmaps[int(q_sharp)] = R
    return rmaps, pool_lists


class SegmentNormTree:
    """Canonical-interval lp compression over the Morton order of a partition:
    per node, D functionals equivalent to the mass of the node's leaf rows."""

    def __init__(self, nleaves, row_blocks, p, D):
        self.p = p
        self.D = D
        self.levels = []
        ptr = np.zeros(nleaves + 1, dtype=np.int64)
        rows = []
        for i, blk in enumerate(row_blocks):
            if blk is not None and len(blk):
                rows.append(np.atleast_2d(blk))
                ptr[i + 1] = ptr[i] + len(blk)
            else:
                ptr[i + 1] = ptr[i]
        stacked = np.vstack(rows) if rows else np.zeros((0, D))
        level0 = compress_norms_batched(stacked, ptr, p)
        self.levels.append(level0)
        cur = level0
        while len(cur) > 1:
            m = len(cur)
            pairs = cur[: (m // 2) * 2].reshape(m // 2, 2 * D, D)
            nxt = compress_norms_batched(
                pairs.reshape(-1, D),
                np.arange(0, (m // 2) * 2 * D + 1, 2 * D), p)
            if m % 2:
                nxt = np.concatenate([nxt, cur[-1:][:]], axis=0)
            self.levels.append(nxt)
            cur = nxt

    def gather(self, i0, i1):
        """Functional blocks covering the leaf range [i0, i1)."""
        out = []
        lvl = 0
        while i0 < i1:
            if i0 % 2 == 1 or (i0 + 1 == i1):
                out.append(self.levels[lvl][i0])
                i0 += 1
            if i1 % 2 == 1 and i0 < i1:
                out.append(self.levels[lvl][i1 - 1])
                i1 -= 1
            i0 //= 2
            i1 //= 2
            lvl += 1
            if lvl >= len(self.levels):
                break
        return out


def _cell_shift(t_G):
    return int(round(np.log2(2.0 / t_G)))


def dilate_cells_of(corner, level, bits, n, t_G):
    """Corners of the dyadic cells (side = side(Q) * t_G/2) tiling (1+t_G)Q."""
    corner = np.asarray(corner, dtype=np.int64)
    side = np.int64(1) << (bits - level)
    cell = side >> _cell_shift(t_G)
    if cell < 1:
        raise OverflowError("testing cube below the cell resolution")
    k = int(side // cell)
    per_axis = np.arange(-1, k + 1)
    if n == 1:
        flats = (corner[0] + per_axis * cell)[:, None]
    else:
        u, v = np.meshgrid(per_axis, per_axis, indexing="ij")
        flats = np.stack([corner[0] + u.ravel() * cell,
                          corner[1] + v.ravel() * cell], axis=1)
    okm = np.all((flats >= 0) & (flats < (1 << bits)), axis=1)
    return flats[okm], cell


def covering_cubes(part: CubePartition, corner, level, t_G):
    """Prev-partition indices of the cubes inside (1 + t_G) * Qhat, using the
    dyadic cell decomposition of the dilated box."""
    bits, n = part.bits, part.n
    corner = np.asarray(corner, dtype=np.int64)
    side = np.int64(1) << (bits - level)
    cell = side >> _cell_shift(t_G)
    k = int(side // cell)
    per_axis = np.arange(-1, k + 1)
    out = []
    if n == 1:
        starts = corner[0] + per_axis * cell
        flats = starts[:, None]
    else:
        u, v = np.meshgrid(per_axis, per_axis, indexing="ij")
        flats = np.stack([corner[0] + u.ravel() * cell,
                          corner[1] + v.ravel() * cell], axis=1)
    okm = np.all((flats >= 0) & (flats < (1 << bits)), axis=1)
    lvl_cell = bits - int(cell).bit_length() + 1
    if np.any(okm):
        codes = encode(flats[okm], bits)
        span = np.int64(cell) ** n
        i0 = np.searchsorted(part.codes, codes)
        i1 = np.searchsorted(part.codes, codes + span)
        for a, b in zip(i0, i1):
            # a cube larger than the cell may share its corner code; only
            # cubes inside the cell belong to the range
            out.extend(j for j in range(a, b) if part.level[j] >= lvl_cell)
    # larger cubes (side > cell) inside the dilate: enumerate aligned corners
    for lq in range(int(level), lvl_cell):
        s = 1 << (bits - lq)
        lo = corner - cell
        hi = corner + side + cell
        ax = []
        for i in range(n):
            first = -(-int(lo[i]) // s) * s
            ax.append(np.arange(first, int(hi[i]) - s + 1, s))
        if any(len(a) == 0 for a in ax):
            continue
        if n == 1:
            cand = ax[0][:, None]
        else:
            u, v = np.meshgrid(ax[0], ax[1], indexing="ij")
            cand = np.stack([u.ravel(), v.ravel()], axis=1)
        idx = part.find_index(cand, np.full(len(cand), lq))
        out.extend(int(i) for i in idx if i >= 0)
    return np.asarray(sorted(set(out)), dtype=np.int64)


class TaggingOracle:
    """q-form and basis-fitting thresholds for testing cubes of a previous
    decomposition, backed by the marked-cube segment tree."""

    def __init__(self, state, old_norm, kindex, rmaps, geom):
        self.state = state
        self.geom = geom
        self.jets = state.jets
        self.p = state.p
        self.consts = state.consts
        self.kindex = kindex
        self.rmaps = rmaps
        part = state.part
        D = self.jets.D
        scale = float(1 << part.bits)
        m, n = self.jets.m, self.jets.n
        blocks = [None] * len(part)
        # marks per main cube: the old compressed functionals composed with
        # the keystone jet of the cube's mark
        for rnk, q in enumerate(state.main_idx):
            R = rmaps.get(int(kindex.K[q]))
            mus = old_norm[rnk]
            blocks[q] = mus.copy() if (R is None or R.trivial) else mus @ R.pmat
        # marks per disagreeing touching pair, attached to the smaller cube
        for (q1, q2) in kindex.border_disputes:
            R1 = rmaps.get(int(kindex.K[q1]))
            R2 = rmaps.get(int(kindex.K[q2]))
            if R1 is None or R2 is None or (R1.trivial and R2.trivial):
                continue
            dmat = R1.pmat - R2.pmat
            delta = part.side[q1] / scale
            x = (part.corner[q1] + part.side[q1] / 2.0) / scale
            rows = []
            for beta in self.jets.alphas:
                w = delta ** (n / self.p - m + sum(beta))
                rows.append(w * (_deriv_row(self.jets, x, beta) @ dmat))
            extra = np.asarray(rows)
            blocks[q1] = extra if blocks[q1] is None else np.vstack([blocks[q1], extra])
        self.old_norm = old_norm
        self.tree = SegmentNormTree(len(part), blocks, self.p, D)
        self._qcache = {}
        self._etacache = {}

    def q_form(self, corner, level):
        key = (tuple(int(c) for c in np.atleast_1d(corner)), int(level))
        if key in self._qcache:
            return self._qcache[key]
        state = self.state
        part = state.part
        jets, p = self.jets, self.p
        D = jets.D
        m, n = jets.m, jets.n
        scale = float(1 << part.bits)
        t_G = state.consts.t_G
        corner = np.asarray(corner, dtype=np.int64)
        side = np.int64(1) << (part.bits - level)
        cell = side >> _cell_shift(t_G)
        blocks = []
        # cell ranges: all marks on cubes small enough to sit inside a cell
        k = int(side // cell)
        per_axis = np.arange(-1, k + 1)
        if n == 1:
            flats = (corner[0] + per_axis * cell)[:, None]
        else:
            u, v = np.meshgrid(per_axis, per_axis, indexing="ij")
            flats = np.stack([corner[0] + u.ravel() * cell,
                              corner[1] + v.ravel() * cell], axis=1)
        okm = np.all((flats >= 0) & (flats < (1 << part.bits)), axis=1)
        lvl_cell = part.bits - int(cell).bit_length() + 1
        if np.any(okm):
            codes = encode(flats[okm], part.bits)
            span = np.int64(cell) ** n
            i0 = np.searchsorted(part.codes, codes)
            i1 = np.searchsorted(part.codes, codes + span)
            for a, b in zip(i0, i1):
                while a < b and part.level[a] < lvl_cell:
                    a += 1
                if b > a:
                    blocks.extend(self.tree.gather(int(a), int(b)))
        # large covering cubes: compare-with-P rows and direct old norms
        cov = covering_cubes(part, corner, level, t_G)
        big = cov[part.side[cov] > cell]
        shat = side / scale
        for q in big:
            sq = part.side[q] / scale
            rnk = state.main_rank[q]
            if sq >= t_G * shat:
                if rnk >= 0:
                    blocks.append(self.old_norm[rnk])
            else:
                # R-composed functionals live in the tree only for cubes
                # inside cells; mid-size cubes are added directly
                R = self.rmaps.get(int(self.kindex.K[q]))
                if rnk >= 0 and R is not None:
                    blocks.append(self.old_norm[rnk] @ R.pmat)
                if R is not None and sq >= t_G * t_G * shat:
                    x = (part.corner[q] + part.side[q] / 2.0) / scale
                    rows = [
                        (sq ** (n / p - m + sum(beta)))
                        * (_deriv_row(jets, x, beta) @ (R.pmat - np.eye(D)))
                        for beta in jets.alphas]
                    blocks.append(np.asarray(rows))
        # the one arbitrary interior cube, compared against P at the center
        ctr = corner + side // 2
        qsp = part.locate_points(ctr[None, :])[0]
        if qsp >= 0:
            sq = part.side[qsp] / scale
            R = None if sq >= t_G * shat else self.rmaps.get(int(self.kindex.K[qsp]))
            Rm = np.eye(D) if R is None else R.pmat
            x = (corner + side / 2.0) / scale
            rows = [
                (shat ** (n / p - m + sum(beta)))
                * (_deriv_row(jets, x, beta) @ (Rm - np.eye(D)))
                for beta in jets.alphas]
            blocks.append(np.asarray(rows))
        if blocks:
            mus = compress_norms(np.vstack(blocks), p)
        else:
            mus = np.zeros((D, D))
        if self.consts.robust:
            mus = np.vstack([mus, self.consts.delta_g * np.eye(D)])
        q_mat = mus.T @ mus
        out = (mus, q_mat)
        self._qcache[key] = out
        return out

    def eta(self, corner, level, A):
        """The optimize-basis threshold: min over labels A' <= A of the
        basis-fitting piecewise monomials of the cube's q-form."""
        key = (tuple(int(c) for c in np.atleast_1d(corner)), int(level), A)
        if key in self._etacache:
            return self._etacache[key]
        from .multiindex import label_compare
        _, q_mat = self.q_form(corner, level)
        pms = []
        for Ap in all_labels_sorted(self.jets.m, self.jets.n):
            if label_compare(Ap, A) > 0:
                continue
            pms.append(fit_basis_to_convex_body(q_mat, list(Ap), self.jets, self.p))
        fn = lambda d: min(pm(d) for pm in pms)
        self._etacache[key] = fn
        return fn


def compute_interesting_tree(state, geom, wspd_pairs):
    """Sorted candidate testing cubes: data-carrying cubes of the previous
    decomposition, geometrically interesting testing cubes, and the unit
    cube; with parent pointers under inclusion."""
    part = state.part
    bits, n = part.bits, part.n
    lam = 1.0 / 40.0
    cand_c, cand_l = [], []
    # data-carrying cubes
    homes = np.unique(part.locate_points(geom.coords_int))
    homes = homes[homes >= 0]
    cand_c.append(part.corner[homes])
    cand_l.append(part.level[homes])
    # unit cube
    cand_c.append(np.zeros((1, n), dtype=np.int64))
    cand_l.append(np.zeros(1, dtype=np.int64))
    if len(wspd_pairs):
        xi = geom.coords_int[wspd_pairs[:, 0]]
        xj = geom.coords_int[wspd_pairs[:, 1]]
        d = np.max(np.abs(xi - xj), axis=1).astype(float)
        for lvl_off in range(0, 10):
            # sides from ~d/4 up to ~(2/lam) d
            base = np.maximum(d / 4.0, 1.0) * (2.0 ** lvl_off)
            lvl = bits - np.ceil(np.log2(base)).astype(np.int64)
            ok = (lvl >= 0) & (lvl <= bits) & (base <= 4.0 * d / lam)
            if not np.any(ok):
                continue
            s = (np.int64(1) << (bits - lvl[ok]))
            cen = xi[ok]
            offs = range(-2, 3)
            for u in offs:
                for v in (offs if n == 2 else [0]):
                    delta = np.stack([u * s] + ([v * s] if n == 2 else []), axis=1)
                    c = (cen // s[:, None]) * s[:, None] + delta
                    good = np.all((c >= 0) & (c < (1 << bits)), axis=1)
                    cand_c.append(c[good])
                    cand_l.append(lvl[ok][good])
    corner = np.vstack(cand_c)
    level = np.concatenate(cand_l)
    codes = encode(corner, bits)
    t = (bits - level) * n
    key = codes * (n * bits + 1) + t  # unique per cube
    _, first = np.unique(key, return_index=True)
    corner, level, codes, t = corner[first], level[first], codes[first], t[first]
    # keep testing cubes that are geometrically interesting (or data cubes)
    res = geom.rcz_query(corner, level, dilate=3)
    keep = res["diam_int"] >= lam * (np.int64(1) << (bits - level))
    keep |= part.find_index(corner, level) >= 0
    keep |= level == 0
    # testing-cube requirement: not strictly inside a prev cube
    ctr = corner + (np.int64(1) << (bits - level))[:, None] // 2
    owner = part.locate_points(ctr)
    keep &= (owner < 0) | (part.level[np.maximum(owner, 0)] >= level)
    corner, level, codes, t = corner[keep], level[keep], codes[keep], t[keep]
    order = np.lexsort((-t, codes))
    corner, level, codes, t = corner[order], level[order], codes[order], t[order]
    # parent chain under inclusion (containers precede contents)
    parent = np.full(len(corner), -1, dtype=np.int64)
    stack = []
    span = np.int64(1) << t
    for i in range(len(corner)):
        while stack and not (codes[stack[-1]] <= codes[i]
                             and codes[i] + span[i] <= codes[stack[-1]] + span[stack[-1]]):
            stack.pop()
        parent[i] = stack[-1] if stack else -1
        stack.append(i)
    return corner, level, parent


def critical_targets(state, geom, oracle: TaggingOracle, A, wspd_pairs):
    """Testing cubes around which the basis threshold crosses the tagging
    band; every data point ends up inside at least one target."""
    consts = state.consts
    part = state.part
    bits, n = part.bits, part.n
    scale = float(1 << bits)
    eps_easy, eps_hard = consts.eps_easy, consts.eps_hard
    lam_e = int(np.log2(consts.lam_gap))
    near = consts.near_max_level
    targets = set()

    def add(corner, level):
        targets.add((tuple(int(c) for c in np.atleast_1d(corner)), int(level)))

    if not A:
        # the empty label admits the empty family at every scale, so the unit
        # cube always qualifies and dominates under the largest-target rule
        add(np.zeros(n, dtype=np.int64), 0)
        return sorted(targets)

    corner, level, parent = compute_interesting_tree(state, geom, wspd_pairs)
    add(np.zeros(n, dtype=np.int64), 0)  # Step 4 analogue: checked below

    def eta_at(c, l, delta):
        return oracle.eta(np.asarray(c), int(l), A)(delta)

    def count6564(c, l):
        side = 1 << (bits - l)
        lo = np.asarray(c) * 128 - side
        hi = np.asarray(c) * 128 + 128 * side + side
        # exact count in the 65/64 dilate via the scaled integer box
        cnt = np.sum(np.all((geom.coords_int * 128 >= lo)
                            & (geom.coords_int * 128 < hi), axis=1))
        return int(cnt)

    def ancestor(c, l, up):
        lu = max(int(l) - up, 0)
        s = 1 << (bits - lu)
        return (np.asarray(c) // s) * s, lu

    for i in range(len(corner)):
        pi = parent[i]
        l1 = int(level[i])
        l2 = int(level[pi]) if pi >= 0 else 0
        # Step 1: wide gaps probe intermediate scales for a band crossing
        if l2 + 2 * lam_e + 2 <= l1 - 2 * lam_e and l1 - l2 > 2:
            cu, lu = ancestor(corner[i], l1, lam_e)
            for lmid in range(l2 + lam_e + 1, l1 - lam_e):
                dmid = 2.0 ** -lmid
                v = eta_at(cu, lu, dmid)
                if eps_hard <= v <= eps_easy:
                    cq, lq = ancestor(corner[i], l1, l1 - lmid)
                    add(cq, lq)
                    break
        # Step 2/3: scales near the two ends of the edge
        cands = []
        for j in range(0, lam_e + 1):
            if l1 - j > l2:
                cands.append(ancestor(corner[i], l1, j))
        for (cq, lq) in cands:
            dq = 2.0 ** -lq
            if lq <= near:
                # large cube: only the easy tagging condition matters
                if count6564(cq, lq) <= 1 or eta_at(cq, lq, dq) <= eps_easy:
                    add(cq, lq)
                continue
            cu, lu = ancestor(cq, lq, lam_e)
            du = 2.0 ** -lu
            if eta_at(cu, lu, du) >= eps_hard:
                if count6564(cq, lq) <= 1 or eta_at(cq, lq, dq) <= eps_easy:
                    add(cq, lq)
    # Step 5/6 analogues over the data-carrying prev cubes
    homes = np.unique(part.locate_points(geom.coords_int))
    homes = homes[homes >= 0]
    for q in homes:
        cq, lq = part.corner[q], int(part.level[q])
        if lq <= near:
            add(cq, lq)
            continue
        cu, lu = ancestor(cq, lq, lam_e)
        if eta_at(cu, lu, 2.0 ** -lu) >= eps_hard:
            add(cq, lq)
    # coverage guarantee: each data point must fall inside some target
    tc = np.asarray([c for c, _ in targets], dtype=np.int64).reshape(-1, n)
    tl = np.asarray([l for _, l in targets], dtype=np.int64)
    for k in range(geom.N):
        x = geom.coords_int[k]
        hit = np.all((tc <= x) & (x < tc + (np.int64(1) << (bits - tl))[:, None]), axis=1)
        if not np.any(hit):
            q = part.locate_points(x[None, :])[0]
            add(part.corner[q], int(part.level[q]))
            tc = np.vstack([tc, part.corner[q][None, :]])
            tl = np.concatenate([tl, [int(part.level[q])]])
    return sorted(targets)


def compute_lengthscales(geom, targets, bits, n):
    """Per data point, the sidelength of the largest target containing it."""
    tc = np.asarray([c for c, _ in targets], dtype=np.int64).reshape(-1, n)
    tl = np.asarray([l for _, l in targets], dtype=np.int64)
    out = np.zeros(geom.N)
    for k in range(geom.N):
        x = geom.coords_int[k]
        side = np.int64(1) << (bits - tl)
        hit = np.all((tc <= x) & (x < tc + side[:, None]), axis=1)
        if not np.any(hit):
            raise AssertionError("lengthscale targets must cover the data")
        out[k] = float(side[hit].max()) / (1 << bits)
    return out


def induction_step(prev: LabelState, A, geom, wspd_pairs=None):
    """One label of the induction; copies when the label is not monotonic or
    the previous decomposition is already coarse."""
    jets, p, consts = prev.jets, prev.p, prev.consts
    m, n = jets.m, jets.n
    if not is_monotonic(A, m, n) or np.all(prev.part.level <= 2):
        return copy_state(prev, A)

    kindex = KeystoneIndex(prev.part, consts)
    old_norm = approximate_old_trace_norm(prev)
    rmaps, pool_lists = make_keystone_jets(prev, A, kindex, prev.pool)
    oracle = None
    if A:
        oracle = TaggingOracle(prev, old_norm, kindex, rmaps, geom)
    targets = critical_targets(prev, geom, oracle, A, wspd_pairs
                               if wspd_pairs is not None else np.zeros((0, 2), int))
    delta_A = compute_lengthscales(geom, targets, prev.part.bits, n)
    part = build_cz(geom, delta=delta_A, K=consts.K_cz, old=prev.part,
                    count_rule=False)

    st = LabelState(A, "step", part, jets, p, consts, prev.pool)
    st.prev = prev
    st.base = getattr(prev, "base", prev)
    st.kindex = kindex
    st.rmaps = rmaps
    st.a_const = max(prev.a_const * consts.a_decay, consts.a_floor)
    main_idx, reps = find_main_cubes(part, geom)
    st.main_idx = main_idx
    st.main_rep = reps
    st.main_rank = np.full(len(part), -1, dtype=np.int64)
    st.main_rank[main_idx] = np.arange(len(main_idx))

    scale = float(1 << part.bits)
    t_G = consts.t_G
    D = jets.D
    # flat per-prev-cube keystone data for the one-dimensional jet space
    k_lam = None
    if D == 1:
        k_lam = np.ones(len(prev.part))
        k_om = np.full(len(prev.part), -1, dtype=np.int64)
        for kq, R in rmaps.items():
            if R.trivial:
                continue
            k_lam[kq] = R.pmat[0, 0]
            if R.rows_a[0][0]:
                k_om[kq] = R.rows_a[0][0][0]
        k_lam = k_lam[kindex.K]
        k_om_all = k_om[kindex.K]
        k_triv = np.array([rmaps[int(k)].trivial if int(k) in rmaps else True
                           for k in kindex.K])
    xi = FunctionalList(D)
    ptr = [0]
    covering = []
    simple = np.zeros(len(main_idx), dtype=bool)
    # disputes sorted by the smaller cube's position for range selection
    bd = kindex.border_disputes
    if len(bd):
        keep = (prev.part.side[bd[:, 0]] < prev.part.side[bd[:, 1]]) | \
               ((prev.part.side[bd[:, 0]] == prev.part.side[bd[:, 1]])
                & (bd[:, 0] < bd[:, 1]))
        bd = bd[keep]
    bd_codes = prev.part.codes[bd[:, 0]] if len(bd) else np.zeros(0, dtype=np.int64)
    bd_order = np.argsort(bd_codes)
    bd = bd[bd_order] if len(bd) else bd
    bd_codes = bd_codes[bd_order] if len(bd) else bd_codes
    eyeD = np.eye(D)

    for rnk, qhat in enumerate(main_idx):
        chat = part.corner[qhat]
        lhat = int(part.level[qhat])
        shat_i = int(part.side[qhat])
        shat = shat_i / scale
        cov = covering_cubes(prev.part, chat, lhat, t_G)
        covering.append(cov)
        min_side = prev.part.side[cov].min() if len(cov) else shat_i
        is_simple = min_side >= consts.c_star * shat_i
        simple[rnk] = is_simple
        if is_simple:
            # adopt the previous functionals of the covered main cubes
            # (rows are immutable once created, so sharing is safe)
            for q in cov:
                r0 = prev.main_rank[q]
                if r0 < 0:
                    continue
                for l in range(prev.cube_ptr[r0], prev.cube_ptr[r0 + 1]):
                    xi.copy_row_from(prev.xi, l)
            ptr.append(len(xi))
            continue
        # term families (I)-(IV) against the keystone jets
        for q in cov:
            r0 = prev.main_rank[q]
            sq = prev.part.side[q] / scale
            R = None if sq >= t_G * shat else rmaps.get(int(kindex.K[q]))
            if R is not None and R.trivial:
                R = None
            if r0 >= 0:
                for l in range(prev.cube_ptr[r0], prev.cube_ptr[r0 + 1]):
                    if R is None:
                        xi.copy_row_from(prev.xi, l)
                    elif D == 1:
                        w = prev.xi.pp[l]
                        fi, fc = prev.xi.fp_row(l)
                        ai, ac = prev.xi.ap_row(l)
                        xi.add(f_idx=fi, f_coef=fc,
                               a_idx=list(ai) + list(R.rows_a[0][0]),
                               a_coef=list(ac) + [w * c for c in R.rows_a[0][1]],
                               ppart=[w * R.pmat[0, 0]])
                    else:
                        pl = prev.xi.ppart_row(l)
                        pp, ai, ac = R.apply_rows(pl)
                        fi, fc = prev.xi.fp_row(l)
                        ai0, ac0 = prev.xi.ap_row(l)
                        xi.add(f_idx=fi, f_coef=fc,
                               a_idx=list(ai0) + ai, a_coef=list(ac0) + ac,
                               ppart=pp)
            # (III): mid-size cubes compared against the input polynomial
            if R is not None and sq >= t_G * t_G * shat:
                x = (prev.part.corner[q] + prev.part.side[q] / 2.0) / scale
                if D == 1:
                    w = sq ** (n / p - m)
                    xi.add(a_idx=R.rows_a[0][0],
                           a_coef=[w * c for c in R.rows_a[0][1]],
                           ppart=[w * (R.pmat[0, 0] - 1.0)])
                else:
                    for beta in jets.alphas:
                        w = sq ** (n / p - m + sum(beta))
                        row = _deriv_row(jets, x, beta)
                        pp, ai, ac = R.apply_rows(w * row)
                        pp -= w * row
                        xi.add(a_idx=ai, a_coef=ac, ppart=pp)
        # (II): disagreeing touching pairs whose smaller cube is well inside;
        # each such cube fits inside one dyadic cell of the dilate, so the
        # cell code intervals select them completely
        if len(bd) and D == 1:
            cells, cellside = dilate_cells_of(chat, lhat, part.bits, n, t_G)
            span = np.int64(cellside) ** n
            cell_codes_lo = encode(cells, part.bits)
            a = np.searchsorted(bd_codes, cell_codes_lo)
            b = np.searchsorted(bd_codes, cell_codes_lo + span)
            picks = np.concatenate([np.arange(x, y) for x, y in zip(a, b)]) \
                if len(a) else np.zeros(0, dtype=np.int64)
            picks = np.unique(picks)
            if len(picks):
                q1s, q2s = bd[picks, 0], bd[picks, 1]
                c1s = prev.part.corner[q1s]
                s1s = prev.part.side[q1s]
                inside = np.all(2 * c1s >= 2 * chat - shat_i, axis=1) & \
                    np.all(2 * (c1s + s1s[:, None]) <= 2 * (chat + shat_i) + shat_i, axis=1)
                small1 = s1s < t_G * shat_i
                small2 = prev.part.side[q2s] < t_G * shat_i
                triv = k_triv[q1s] & (k_triv[q2s] | ~small2)
                sel = inside & small1 & ~triv
                if np.any(sel):
                    q1s, q2s = q1s[sel], q2s[sel]
                    s1f = s1s[sel] / scale
                    w = s1f ** (n / p - m)
                    l1 = np.where(k_triv[q1s], 1.0, k_lam[q1s])
                    l2 = np.where(k_triv[q2s] | ~small2[sel], 1.0, k_lam[q2s])
                    om1 = np.where(k_triv[q1s], -1, k_om_all[q1s])
                    om2 = np.where(k_triv[q2s] | ~small2[sel], -1, k_om_all[q2s])
                    pp = w * (l1 - l2)
                    for i2 in range(len(q1s)):
                        ai, ac = [], []
                        if om1[i2] >= 0:
                            ai.append(int(om1[i2]))
                            ac.append(float(w[i2]))
                        if om2[i2] >= 0:
                            ai.append(int(om2[i2]))
                            ac.append(-float(w[i2]))
                        xi.add(a_idx=ai, a_coef=ac, ppart=[pp[i2]])
        elif len(bd):
            cells, cellside = dilate_cells_of(chat, lhat, part.bits, n, t_G)
            span = np.int64(cellside) ** n
            cell_codes_lo = encode(cells, part.bits)
            seen = set()
            for lc in cell_codes_lo:
                a = np.searchsorted(bd_codes, lc)
                b = np.searchsorted(bd_codes, lc + span)
                for t in range(a, b):
                    if t in seen:
                        continue
                    seen.add(t)
                    q1, q2 = int(bd[t, 0]), int(bd[t, 1])
                    c1 = prev.part.corner[q1]
                    s1 = int(prev.part.side[q1])
                    # inside the dilate and genuinely smaller than the cell
                    if np.any(2 * c1 < 2 * chat - shat_i) or \
                       np.any(2 * (c1 + s1) > 2 * (chat + shat_i) + shat_i):
                        continue
                    s1f = s1 / scale
                    if s1f >= t_G * shat:
                        continue
                    R1 = rmaps.get(int(kindex.K[q1]))
                    if R1 is not None and R1.trivial:
                        R1 = None
                    s2f = prev.part.side[q2] / scale
                    R2 = rmaps.get(int(kindex.K[q2])) if s2f < t_G * shat else None
                    if R2 is not None and R2.trivial:
                        R2 = None
                    if R1 is None and R2 is None:
                        continue
                    x = (c1 + s1 / 2.0) / scale
                    if D == 1:
                        w = s1f ** (n / p - m)
                        l1 = R1.pmat[0, 0] if R1 is not None else 1.0
                        l2 = R2.pmat[0, 0] if R2 is not None else 1.0
                        ai = (list(R1.rows_a[0][0]) if R1 is not None else []) + \
                             (list(R2.rows_a[0][0]) if R2 is not None else [])
                        ac = ([w * c for c in R1.rows_a[0][1]] if R1 is not None else []) + \
                             ([-w * c for c in R2.rows_a[0][1]] if R2 is not None else [])
                        xi.add(a_idx=ai, a_coef=ac, ppart=[w * (l1 - l2)])
                        continue
                    for beta in jets.alphas:
                        w = s1f ** (n / p - m + sum(beta))
                        row = _deriv_row(jets, x, beta)
                        pp1, ai1, ac1 = (R1.apply_rows(w * row) if R1 is not None
                                         else (w * row, [], []))
                        pp2, ai2, ac2 = (R2.apply_rows(w * row) if R2 is not None
                                         else (w * row, [], []))
                        xi.add(a_idx=list(ai1) + list(ai2),
                               a_coef=list(ac1) + [-c for c in ac2],
                               ppart=pp1 - pp2)
        # (IV): the interior cube at the center, against the input polynomial
        ctr = chat + shat_i // 2
        qsp = prev.part.locate_points(ctr[None, :])[0]
        if qsp >= 0:
            sq = prev.part.side[qsp] / scale
            R = None if sq >= t_G * shat else rmaps.get(int(kindex.K[qsp]))
            if R is not None and R.trivial:
                R = None
            if R is not None:
                x = ctr / scale
                if D == 1:
                    w = shat ** (n / p - m)
                    xi.add(a_idx=R.rows_a[0][0],
                           a_coef=[w * c for c in R.rows_a[0][1]],
                           ppart=[w * (R.pmat[0, 0] - 1.0)])
                else:
                    for beta in jets.alphas:
                        w = shat ** (n / p - m + sum(beta))
                        row = _deriv_row(jets, x, beta)
                        pp, ai, ac = R.apply_rows(w * row)
                        pp -= w * row
                        xi.add(a_idx=ai, a_coef=ac, ppart=pp)
        if consts.robust:
            for k_pt in np.flatnonzero(np.all(
                    (geom.coords_int * 128 >= chat * 128 - shat_i)
                    & (geom.coords_int * 128 < chat * 128 + 129 * shat_i), axis=1)):
                w = consts.delta_new ** 2
                x = geom.coords_int[k_pt] / scale
                xi.add(f_idx=[int(k_pt)], f_coef=[w], ppart=-w * _eval_row(jets, x))
            for d0 in range(D):
                e = np.zeros(D)
                e[d0] = consts.delta_new
                xi.add(ppart=e)
        ptr.append(len(xi))

    st.xi = xi
    st.cube_ptr = np.asarray(ptr)
    st.covering = covering
    st.simple = simple
    st.oracle = oracle
    return st


def label_chain(geom, jets, p, consts, wspd_pairs=None):
    """Run the full induction from the minimal label down to the empty one."""
    labels = all_labels_sorted(jets.m, jets.n)
    state = base_case(geom, jets, p, consts)
    states = [state]
    for A in labels[1:]:
        state = induction_step(state, A, geom, wspd_pairs=wspd_pairs)
        states.append(state)
    return states


def testing_functional(prev, kindex, rmaps, corner, level, f=None, Pvec=None):
    """The functional list of one testing cube (the four term families), and
    the lp aggregate M(f, P) when data is supplied.

    The cube must be tiled by the previous decomposition; the returned list
    lives on the previous label's assist pool.
    """
    part = prev.part
    jets, p, consts = prev.jets, prev.p, prev.consts
    m, n = jets.m, jets.n
    D = jets.D
    t_G = consts.t_G
    scale = float(1 << part.bits)
    corner = np.asarray(corner, dtype=np.int64)
    shat_i = int(np.int64(1) << (part.bits - level))
    shat = shat_i / scale
    ctr = corner + shat_i // 2
    owner = part.locate_points(ctr[None, :])[0]
    if owner >= 0 and part.level[owner] < level:
        raise ValueError("not a testing cube: strictly inside a partition cube")
    xi = FunctionalList(D)
    cov = covering_cubes(part, corner, int(level), t_G)
    eyeD = np.eye(D)
    for q in cov:
        r0 = prev.main_rank[q]
        sq = part.side[q] / scale
        R = None if sq >= t_G * shat else rmaps.get(int(kindex.K[q]))
        if R is not None and R.trivial:
            R = None
        if r0 >= 0:
            for l in range(prev.cube_ptr[r0], prev.cube_ptr[r0 + 1]):
                if R is None:
                    xi.copy_row_from(prev.xi, l)
                else:
                    pl = prev.xi.ppart_row(l)
                    pp, ai, ac = R.apply_rows(pl)
                    fi, fc = prev.xi.fp_row(l)
                    ai0, ac0 = prev.xi.ap_row(l)
                    xi.add(f_idx=fi, f_coef=fc, a_idx=list(ai0) + ai,
                           a_coef=list(ac0) + ac, ppart=pp)
        if R is not None and sq >= t_G * t_G * shat:
            x = (part.corner[q] + part.side[q] / 2.0) / scale
            for beta in jets.alphas:
                w = sq ** (n / p - m + sum(beta))
                row = _deriv_row(jets, x, beta)
                pp, ai, ac = R.apply_rows(w * row)
                pp -= w * row
                xi.add(a_idx=ai, a_coef=ac, ppart=pp)
    lo_q = encode(np.maximum(corner - shat_i // 2, 0)[None, :], part.bits)[0]
    for (q1, q2) in kindex.border_disputes:
        c1 = part.corner[q1]
        s1 = int(part.side[q1])
        if np.any(2 * c1 < 2 * corner - shat_i) or \
           np.any(2 * (c1 + s1) > 2 * (corner + shat_i) + shat_i):
            continue
        if s1 >= t_G * shat_i:
            continue
        R1 = rmaps.get(int(kindex.K[q1]))
        R2 = rmaps.get(int(kindex.K[q2])) if part.side[q2] < t_G * shat_i else None
        if R1 is not None and R1.trivial:
            R1 = None
        if R2 is not None and R2.trivial:
            R2 = None
        if R1 is None and R2 is None:
            continue
        x = (c1 + s1 / 2.0) / scale
        for beta in jets.alphas:
            w = (s1 / scale) ** (n / p - m + sum(beta))
            row = _deriv_row(jets, x, beta)
            pp1, ai1, ac1 = (R1.apply_rows(w * row) if R1 is not None
                             else (w * row, [], []))
            pp2, ai2, ac2 = (R2.apply_rows(w * row) if R2 is not None
                             else (w * row, [], []))
            xi.add(a_idx=list(ai1) + list(ai2),
                   a_coef=list(ac1) + [-c for c in ac2], ppart=pp1 - pp2)
    if owner >= 0:
        sq = part.side[owner] / scale
        R = None if sq >= t_G * shat else rmaps.get(int(kindex.K[owner]))
        if R is not None and not R.trivial:
            x = ctr / scale
            for beta in jets.alphas:
                w = shat ** (n / p - m + sum(beta))
                row = _deriv_row(jets, x, beta)
                pp, ai, ac = R.apply_rows(w * row)
                pp -= w * row
                xi.add(a_idx=ai, a_coef=ac, ppart=pp)
    value = None
    if f is not None:
        av = prev.pool.evaluate(np.asarray(f, dtype=float))
        vals = xi.evaluate(np.asarray(f, dtype=float), av,
                           Pvec if Pvec is not None else np.zeros(D))
        value = float(np.sum(np.abs(vals) ** p) ** (1.0 / p))
    return xi, value


def approximate_new_trace_norm(oracle: TaggingOracle, corner, level):
    """D polynomial functionals whose lp mass tracks the testing functional
    at f = 0, plus the sandwiching quadratic form."""
    return oracle.q_form(corner, level)


def optimize_basis(oracle: TaggingOracle, corner, level, A):
    """The label-minimized basis-fitting threshold of one testing cube."""
    return oracle.eta(corner, level, A)


def critical_testing_cubes(prev, geom, oracle, A, wspd_pairs=None):
    """Named surface for the target-cube search (see critical_targets)."""
    return critical_targets(prev, geom, oracle, A,
                            wspd_pairs if wspd_pairs is not None
                            else np.zeros((0, 2), int))


def assemble_label(prev, A, geom, wspd_pairs=None):
    """Named surface for one induction step (see induction_step)."""
    return induction_step(prev, A, geom, wspd_pairs=wspd_pairs)
