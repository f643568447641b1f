"""Geometry of the data set: well-separated pair decompositions, exact range
statistics over dyadic cells, descriptor cubes, clusters and halos.

The nearest-neighbor side is served by a kd-tree in the sup metric (exact
answers trivially satisfy the 2-approximate contract); counts, minima,
representatives and diameters over dyadic cells are exact via Morton-sorted
sparse tables.
"""

import numpy as np
from scipy.spatial import cKDTree

from .dyadic import DyadicCube
from .mortons import PointIndex, encode


class EGeometry:
    """Query bundle for a snapped point set E inside the unit frame."""

    def __init__(self, coords_int, bits):
        coords_int = np.asarray(coords_int, dtype=np.int64)
        if coords_int.ndim == 1:
            coords_int = coords_int[:, None]
        self.coords_int = coords_int
        self.bits = bits
        self.n = coords_int.shape[1]
        self.N = len(coords_int)
        self.scale = float(1 << bits)
        self.coords = coords_int / self.scale
        self.index = PointIndex(coords_int, bits)
        for i in range(self.n):
            self.index.attach(f"c{i}", coords_int[:, i])
        self.tree = cKDTree(self.coords)

    # -- nearest neighbors ---------------------------------------------------
    def nearest2(self, x):
        """Two distinct points of E nearest to x (exact, sup metric)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = min(2, self.N)
        d, idx = self.tree.query(x, k=k, p=np.inf)
        if k == 1:
            return idx[:, None] if idx.ndim == 1 else idx
        return idx

    def nearest_dist(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d, _ = self.tree.query(x, k=1, p=np.inf)
        return d

    # -- exact range statistics over dyadic cells ----------------------------
    def _cells(self, corner, level, dilate):
        """(lo, hi) code ranges of the dyadic cells tiling dilate*Q."""
        corner = np.asarray(corner, dtype=np.int64)
        if corner.ndim == 1:
            corner = corner[:, None]
        level = np.asarray(level, dtype=np.int64)
        side = np.int64(1) << (self.bits - level)
        if dilate == 1:
            reps, cell = 1, side
            base = corner
        elif dilate == 3:
            reps, cell = 3, side
            base = corner - side[:, None]
        elif dilate == (65, 64):
            # 65/64-dilate tiles by side/128 cells, 130 per axis
            reps, cell = 130, side >> 7
            if np.any(cell < 1):
                raise ValueError("65/64 cells below one unit; bit budget too small")
            base = corner - cell[:, None]
        else:
            num, den = dilate
            # (num/den)*Q as cells of side side/den (num odd multiples)
            cell = side // den
            if np.any(cell * den != side):
                raise ValueError("dilate does not align with the cube grid")
            reps = num
            base = corner - ((num - den) // 2) * cell[:, None]
        offs = np.arange(reps)
        Q = len(corner)
        if self.n == 1:
            starts = base[:, 0][:, None] + offs[None, :] * cell[:, None]
            flat = starts.reshape(-1, 1)
        else:
            ox, oy = np.meshgrid(offs, offs, indexing="ij")
            sx = base[:, 0][:, None] + ox.ravel()[None, :] * cell[:, None]
            sy = base[:, 1][:, None] + oy.ravel()[None, :] * cell[:, None]
            flat = np.stack([sx.reshape(-1), sy.reshape(-1)], axis=1)
        valid = np.all((flat >= 0) & (flat < (1 << self.bits)), axis=1)
        lo = np.full(len(flat), -1, dtype=np.int64)
        if np.any(valid):
            lo[valid] = encode(flat[valid], self.bits)
        span = (cell.astype(object) ** self.n).astype(np.int64)
        span = np.repeat(span, reps ** self.n)
        hi = np.where(lo >= 0, lo + span, -1)
        return lo.reshape(Q, -1), hi.reshape(Q, -1)

    def rcz_query(self, corner, level, dilate=1, values=None):
        """Exact {count, min value, representative, diam} over E n dilate*Q.

        dilate is 1, 3, (65, 64) or any aligned (num, den) pair; `values`
        names a per-point array previously attached for the minimum.
        Returns dict of arrays; representative/min are None-markers (-1 / inf)
        when the intersection is empty.
        """
        lo, hi = self._cells(corner, level, dilate)
        shape = lo.shape
        valid = lo >= 0
        i0 = np.searchsorted(self.index.codes, np.where(valid, lo, 0), side="left")
        i1 = np.searchsorted(self.index.codes, np.where(valid, hi, 0), side="left")
        i1 = np.where(valid, i1, i0)
        counts = (i1 - i0).sum(axis=1)
        mins, maxs, anyp = self.index.coord_bounds((i0, i1))
        diam = np.where(counts > 0, (maxs - mins).max(axis=1), -1)
        rep = np.full(len(counts), -1, dtype=np.int64)
        has = np.argmax(i1 > i0, axis=1)
        nonempty = counts > 0
        rep[nonempty] = self.index.order[i0[np.arange(len(counts)), has][nonempty]]
        out = {"count": counts, "diam_int": diam, "rep": rep}
        if values is not None:
            v, rmq = self.index._aux[values]
            m = rmq.min(i0.ravel(), i1.ravel()).reshape(shape)
            out["min"] = np.min(np.where(valid, m, np.inf), axis=1)
        return out

    def count_in_box(self, lo_corner, hi_corner):
        """Exact point count in the half-open box prod [lo_i, hi_i) (integer
        coordinates); kd-candidates refined by exact integer tests."""
        lo = np.asarray(lo_corner, dtype=np.int64)
        hi = np.asarray(hi_corner, dtype=np.int64)
        center = (lo + hi) / 2.0 / self.scale
        r = float(np.max(hi - lo)) / 2.0 / self.scale
        cand = self.tree.query_ball_point(center, r * (1 + 1e-9) + 1e-12, p=np.inf)
        cand = np.asarray(cand, dtype=np.int64)
        if cand.size == 0:
            return 0, cand
        pts = self.coords_int[cand]
        ok = np.all((pts >= lo) & (pts < hi), axis=1)
        return int(np.sum(ok)), cand[ok]


def bbd_nearest(geom: EGeometry, x):
    """(x1, x2): indices of two distinct points with |x - x1| <= 2 d1, |x - x2| <= 2 d2."""
    return geom.nearest2(x)


def rcz_query(geom: EGeometry, cube: DyadicCube, dilate=1, values=None):
    out = geom.rcz_query(np.asarray([cube.corner]), np.asarray([cube.level]),
                         dilate=dilate, values=values)
    return {k: v[0] for k, v in out.items()}


# ---------------------------------------------------------------------------
# well-separated pair decomposition (fair split tree)

class _FSTNode:
    __slots__ = ("lo", "hi", "idx", "left", "right", "rep")

    def __init__(self, pts, idx):
        self.lo = pts.min(axis=0)
        self.hi = pts.max(axis=0)
        self.idx = idx
        self.left = self.right = None
        self.rep = idx[0]

    @property
    def diam(self):
        return float(np.max(self.hi - self.lo))


def make_wspd(coords, separation=1e10):
    """Representative pairs of a WSPD: for every distinct (x', x'') some pair
    (a, b) satisfies |x'-a| + |x''-b| <= (1/separation)|x'-x''| and
    <= (1/separation)|a-b|.  Fair-split-tree construction; the pair sets are
    never materialized, only representatives are returned.
    """
    pts = np.atleast_2d(np.asarray(coords, dtype=float))
    N = len(pts)
    if N < 2:
        raise ValueError("need at least two points")

    def build(idx):
        node = _FSTNode(pts[idx], idx)
        if len(idx) == 1:
            return node
        ext = node.hi - node.lo
        axis = int(np.argmax(ext))
        if ext[axis] == 0:
            raise ValueError("duplicate points")
        cut = 0.5 * (node.lo[axis] + node.hi[axis])
        mask = pts[idx, axis] <= cut
        if mask.all() or not mask.any():
            order = np.argsort(pts[idx, axis])
            mask = np.zeros(len(idx), dtype=bool)
            mask[order[: len(idx) // 2]] = True
        node.left = build(idx[mask])
        node.right = build(idx[~mask])
        return node

    root = build(np.arange(N))
    pairs = []

    def separated(a, b):
        d = float(np.max(np.maximum(a.lo - b.hi, b.lo - a.hi).clip(min=0.0)))
        return (a.diam + b.diam) * separation <= d and d > 0

    stack = [(root, root)]
    seen = set()
    while stack:
        a, b = stack.pop()
        if a is b:
            if a.left is None:
                continue
            stack.append((a.left, a.left))
            stack.append((a.right, a.right))
            stack.append((a.left, a.right))
            continue
        if separated(a, b):
            pairs.append((a.rep, b.rep))
            continue
        # split the bigger box
        if a.diam < b.diam or a.left is None:
            a, b = b, a
        if a.left is None:
            # both singletons but not separated: distinct points always separate
            pairs.append((a.rep, b.rep))
            continue
        stack.append((a.left, b))
        stack.append((a.right, b))
    return np.asarray(pairs, dtype=np.int64)


# ---------------------------------------------------------------------------
# descriptor cubes and clusters

def find_descriptor_cube(geom: EGeometry, cube: DyadicCube):
    """Either a promise that #(3Q n E) <= 1, or the descriptor cube of
    S = 3Q n E with its lower-left and upper-right corners."""
    out = geom.rcz_query(np.asarray([cube.corner]), np.asarray([cube.level]), dilate=3)
    if out["count"][0] <= 1:
        return None
    lo, hi = geom._cells(np.asarray([cube.corner]), np.asarray([cube.level]), 3)
    i0 = np.searchsorted(geom.index.codes, np.where(lo[0] >= 0, lo[0], 0), side="left")
    i1 = np.searchsorted(geom.index.codes, np.where(hi[0] >= 0, hi[0], 0), side="left")
    i1 = np.where(lo[0] >= 0, i1, i0)
    mins, maxs, _ = geom.index.coord_bounds((i0[None, :], i1[None, :]))
    llc, urc = mins[0], maxs[0]
    dc = descriptor_cube_of(llc, urc, geom.bits)
    return dc, tuple(llc), tuple(urc)


def descriptor_cube_of(llc, urc, bits):
    """Smallest dyadic cube containing LLC whose 3-dilate contains URC."""
    n = len(llc)
    best = None
    for level in range(bits, -1, -1):
        side = 1 << (bits - level)
        corner = tuple((int(c) >> (bits - level)) << (bits - level) for c in llc)
        q = DyadicCube(corner, level, bits)
        ok = all(corner[i] - side <= int(urc[i]) < corner[i] + 2 * side for i in range(n))
        if ok:
            return q
    raise AssertionError("frame cube always qualifies")


class Cluster:
    __slots__ = ("descriptor", "rep_idx", "members", "diam_int", "dist_int", "extras")

    def __init__(self, descriptor, rep_idx, members, diam_int, dist_int):
        self.descriptor = descriptor
        self.rep_idx = rep_idx
        self.members = members
        self.diam_int = diam_int
        self.dist_int = dist_int          # dist(S, E \ S); None when E == S
        self.extras = None                # n=1: the two one-sided halo points

    def in_halo(self, x_int, A, rep_coords):
        d = max(abs(int(a) - int(b)) for a, b in zip(x_int, rep_coords))
        hi = np.inf if self.dist_int is None else self.dist_int / A
        return A * self.diam_int < d < hi


def make_cluster_descriptors(geom: EGeometry, A, pairs=None):
    """Distinct descriptor cubes whose 3-dilates cut out clusters; every
    strong cluster appears.  A must be a power of two above the dimensional
    threshold."""
    if pairs is None:
        pairs = make_wspd(geom.coords)
    bits = geom.bits
    logA4 = 4 * int(np.log2(A))
    found = {}
    for i, j in pairs:
        d = int(np.max(np.abs(geom.coords_int[i] - geom.coords_int[j])))
        if d == 0:
            continue
        # dyadic cube containing x_i with side in [2d, 4d]
        side = 1 << (max(2 * d - 1, 1)).bit_length()
        level = bits - side.bit_length() + 1
        if level < 0:
            continue
        shift = bits - level
        corner = tuple((int(c) >> shift) << shift for c in geom.coords_int[i])
        qc = DyadicCube(corner, level, bits)
        # the "like" test against the A^4-enlarged ancestor
        up_level = max(level - logA4, 0)
        ushift = bits - up_level
        ucorner = tuple((int(c) >> ushift) << ushift for c in geom.coords_int[i])
        qu = DyadicCube(ucorner, up_level, bits)
        c1 = geom.rcz_query(np.asarray([qc.corner]), np.asarray([qc.level]), 3)["count"][0]
        c2 = geom.rcz_query(np.asarray([qu.corner]), np.asarray([qu.level]), 3)["count"][0]
        if c1 != c2 or c1 < 2:
            continue
        res = find_descriptor_cube(geom, qc)
        if res is None:
            continue
        dc, _, _ = res
        found[dc] = True
    return sorted(found.keys(), key=lambda q: (q.level, q.corner))


def make_cluster_representatives(geom: EGeometry, descriptors, A):
    """Cluster objects (members, representative, diameter, gap, halo extras)."""
    out = []
    for dc in descriptors:
        q = geom.rcz_query(np.asarray([dc.corner]), np.asarray([dc.level]), 3)
        lo, hi = geom._cells(np.asarray([dc.corner]), np.asarray([dc.level]), 3)
        members = []
        for l, h in zip(lo[0], hi[0]):
            if l < 0:
                continue
            a, b = geom.index.range_of_codes(l, h)
            members.extend(geom.index.order[a:b].tolist())
        members = np.asarray(sorted(members), dtype=np.int64)
        rep = int(q["rep"][0])
        diam = int(q["diam_int"][0])
        rest = np.setdiff1d(np.arange(geom.N), members)
        if len(rest) == 0:
            dist = None
        else:
            d = np.min(np.max(np.abs(geom.coords_int[rest][:, None, :]
                                     - geom.coords_int[members][None, :, :]), axis=2))
            dist = int(d)
        cl = Cluster(dc, rep, members, diam, dist)
        if geom.n == 1:
            x = int(geom.coords_int[rep, 0])
            cl.extras = (x - 4 * A * diam, x + 4 * A * diam)
        out.append(cl)
    return out


def locate_relevant_cluster(geom: EGeometry, clusters, x_int, A):
    """Descriptor index of a cluster whose halo admits the query point, under
    the promise that such a strong cluster exists."""
    x = np.asarray(x_int, dtype=np.int64) / geom.scale
    d1 = float(geom.nearest_dist(x[None, :])[0])
    if d1 <= 0:
        return None
    target = 8.0 * d1
    side = 1 << int(np.ceil(np.log2(target * geom.scale)))
    level = geom.bits - side.bit_length() + 1
    level = max(level, 0)
    shift = geom.bits - level
    corner = tuple((int(c) >> shift) << shift for c in np.asarray(x_int, dtype=np.int64))
    res = find_descriptor_cube(geom, DyadicCube(corner, level, geom.bits))
    if res is None:
        return None
    dc, _, _ = res
    for k, cl in enumerate(clusters):
        if cl.descriptor == dc:
            return k
    return None
