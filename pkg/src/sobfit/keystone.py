"""Keystone cubes of a plane decomposition: local minima of the lengthscale
field, the map K(Q) onto them, and the touching pairs where K disagrees.
"""

import numpy as np

from .czdecomp import touching_pairs
from .mortons import CubePartition


def _dilate_cells(part: CubePartition, idx, S):
    """(lo, hi) code ranges of the S^n cells (S odd) tiling S*Q per cube."""
    bits, n = part.bits, part.n
    corner = part.corner[idx]
    side = part.side[idx]
    offs = np.arange(-(S // 2), S // 2 + 1)
    if n == 1:
        starts = corner[:, 0][:, None] + offs[None, :] * side[:, None]
        flat = starts.reshape(-1, 1)
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        sx = corner[:, 0][:, None] + ox.ravel()[None, :] * side[:, None]
        sy = corner[:, 1][:, None] + oy.ravel()[None, :] * side[:, None]
        flat = np.stack([sx.reshape(-1), sy.reshape(-1)], axis=1)
    valid = np.all((flat >= 0) & (flat < (1 << bits)), axis=1)
    from .mortons import encode
    lo = np.full(len(flat), -1, dtype=np.int64)
    if np.any(valid):
        lo[valid] = encode(flat[valid], bits)
    span = (side.astype(np.int64) ** n)
    span = np.repeat(span, S ** n)
    hi = np.where(lo >= 0, lo + span, -1)
    return lo.reshape(len(idx), -1), hi.reshape(len(idx), -1)


class KeystoneIndex:
    """Batch keystone classification, the keystone assignment K(Q) for every
    cube of the partition, and the disagreeing touching pairs.

    Cells of the S2-reach outside the unit frame belong to plane-extension
    cubes of unit or larger side, which can never witness a smaller cube, so
    the frame-clipped range minimum is exact.
    """

    def __init__(self, part: CubePartition, consts):
        self.part = part
        self.S0 = consts.S0
        self.S1 = consts.S1
        self.S2 = consts.S2
        idx = np.arange(len(part))
        # chunked batch keystone test: bounded transient memory
        self.keystone = np.zeros(len(part), dtype=bool)
        w = np.zeros(len(part), dtype=np.int64)
        CH = 65536
        for a in range(0, len(part), CH):
            sub = idx[a: a + CH]
            lo, hi = _dilate_cells(part, sub, self.S2)
            lvl, wit = part.argmax_level_witness(lo, hi)
            finest = lvl.max(axis=1)
            ks = finest <= part.level[sub]
            self.keystone[sub] = ks
            flat_pick = np.argmax(lvl, axis=1)
            ww = wit[np.arange(len(sub)), flat_pick]
            w[sub] = np.where(ks, sub, ww)
        # pointer doubling: levels strictly increase along witness chains
        K = w.astype(np.int64)
        for _ in range(int(np.ceil(np.log2(part.bits + 2))) + 2):
            K = K[K]
        self.K = K
        assert np.all(self.keystone[self.K])
        self.keystone_list = idx[self.keystone]
        pairs = touching_pairs(part)
        bad = self.K[pairs[:, 0]] != self.K[pairs[:, 1]]
        self.border_disputes = pairs[bad]
        self.pairs = pairs

    def pools(self, main_mask):
        """Per keystone cube: the partition cubes meeting its S0-reach (all at
        least as large as the keystone, so each reach cell has a unique
        container).  Returns (keystone index array, list of pool index arrays)
        and the subset flagged main."""
        ks = self.keystone_list
        lo, hi = _dilate_cells(self.part, ks, self.S0)
        cont = self.part.locate_codes(np.where(lo >= 0, lo, 0))
        cont = np.where(lo >= 0, cont, -1)
        pools = []
        for r in range(len(ks)):
            row = cont[r]
            row = np.unique(row[row >= 0])
            pools.append(row)
        return ks, pools


def keystone_or_not(part: CubePartition, i, S2):
    """('keystone', None) or ('witness', j) with side(j) <= side(i)/2 and
    cube j meeting the S2-reach of cube i; oracle-on-cell-centers test."""
    lo, hi = _dilate_cells(part, np.array([i]), S2)
    lvl, wit = part.argmax_level_witness(lo, hi)
    k = int(np.argmax(lvl[0]))
    if lvl[0, k] <= part.level[i]:
        return "keystone", None
    return "witness", int(wit[0, k])


def list_all_keystones(part: CubePartition, geom, S2, c_ratio=3):
    """All keystone cubes via the candidate rule: every keystone's 9-dilate
    holds a data point whose cube is at most 2**c_ratio times larger."""
    bits, n = part.bits, part.n
    homes = part.locate_points(geom.coords_int)
    found = set()
    for k, x in enumerate(geom.coords_int):
        h = homes[k]
        if h < 0:
            continue
        lx = int(part.level[h])
        for lvl in range(lx, min(lx + c_ratio + 1, bits + 1)):
            side = 1 << (bits - lvl)
            base = (x // side) * side
            rng = range(-4, 5)
            if n == 1:
                cands = [(int(base[0]) + u * side,) for u in rng]
            else:
                cands = [(int(base[0]) + u * side, int(base[1]) + v * side)
                         for u in rng for v in rng]
            for c in cands:
                if any(ci < 0 or ci >= (1 << bits) for ci in c):
                    continue
                # x in 9*candidate?
                if any(abs(2 * (xi - ci) - side) > 9 * side for xi, ci in zip(x, c)):
                    continue
                j = part.find_index(np.array([c]), np.array([lvl]))[0]
                if j < 0 or j in found:
                    continue
                if keystone_or_not(part, int(j), S2)[0] == "keystone":
                    found.add(int(j))
    return np.array(sorted(found), dtype=np.int64)


def interstellar_test(part: CubePartition, geom, clusters, A, c_G, i, exponent=10):
    """Exact interstellar classification of cube i, and the index of the
    cluster whose halo swallows its neighborhood when it is interstellar."""
    bits, n = part.bits, part.n
    corner = part.corner[i].astype(float)
    side = float(part.side[i])
    center = (corner + side / 2.0) / geom.scale
    sidef = side / geom.scale
    # (1 + 3 c_G) Q n E == empty?
    r1 = (1 + 3 * c_G) * sidef / 2.0
    cand = geom.tree.query_ball_point(center, r1 * (1 + 1e-12) + 1e-15, p=np.inf)
    half = (1 + 3 * c_G) * side / 2.0
    ctr_int = corner + side / 2.0
    near = [c for c in cand
            if np.all(geom.coords_int[c] >= ctr_int - half)
            and np.all(geom.coords_int[c] < ctr_int + half)]
    if near:
        return False, None
    # diam(A^e Q n E) <= A^-e side?
    rA = (A ** exponent) * sidef / 2.0
    cand = geom.tree.query_ball_point(center, rA * (1 + 1e-12) + 1e-15, p=np.inf)
    halfA = (A ** exponent) * side / 2.0
    sel = [c for c in cand
           if np.all(geom.coords_int[c] >= ctr_int - halfA)
           and np.all(geom.coords_int[c] < ctr_int + halfA)]
    if len(sel) >= 2:
        pts = geom.coords_int[sel]
        diam = int(np.max(pts.max(axis=0) - pts.min(axis=0)))
        if diam > side / (A ** exponent):
            return False, None
    if clusters is None:
        return True, None
    # locate the relevant cluster through the descriptor of the nearby set
    from .geometry import locate_relevant_cluster
    x_int = tuple(int(v) for v in (corner + side / 2.0))
    k = locate_relevant_cluster(geom, clusters, x_int, A)
    return True, k


class KeystoneOracle:
    """Point-query surface: K(Q) for arbitrary partition cubes, routing
    through the interstellar/cluster machinery for cubes outside the marked
    set (all partition cubes are marked here, so the cluster route only fires
    for externally supplied cubes)."""

    def __init__(self, part, geom, index: KeystoneIndex, clusters=None, A=32,
                 c_G=2.0 ** -7):
        self.part = part
        self.geom = geom
        self.index = index
        self.clusters = clusters
        self.A = A
        self.c_G = c_G

    def query(self, i):
        """K for a partition cube given by index; the interstellar route fires
        only when the cube is unmarked (never for materialized partitions, but
        kept for contract parity with the cluster machinery)."""
        i = int(i)
        if 0 <= i < len(self.index.K):
            return int(self.index.K[i])
        raise KeyError("cube not in the partition")

    def query_cube(self, corner, level):
        j = self.part.find_index(np.asarray([corner]), np.asarray([level]))[0]
        if j >= 0:
            return self.query(int(j))
        ok, k = interstellar_test(self.part, self.geom, self.clusters,
                                  self.A, self.c_G,
                                  self.part.locate_points(np.asarray([corner]))[0])
        if ok and k is not None and self.clusters is not None:
            # route through the cluster's one-sided auxiliary cube
            cl = self.clusters[k]
            rep = self.geom.coords_int[cl.rep_idx]
            j = self.part.locate_points(rep[None, :])[0]
            if j >= 0:
                return self.query(int(j))
        raise KeyError("cube not in the partition")


def keystone_oracle(part, geom, consts, clusters=None):
    """One-time keystone machinery: named construction of the query surface."""
    index = KeystoneIndex(part, consts)
    return KeystoneOracle(part, geom, index, clusters=clusters,
                          A=consts.A_cluster, c_G=2.0 ** consts.c_G_log2)


def border_disputes(part, consts):
    """All ordered touching pairs of the partition whose keystone marks
    disagree."""
    return KeystoneIndex(part, consts).border_disputes
