"""Vectorized dyadic machinery: Morton codes, sparse-table range queries, and
sorted cube partitions with point location.

Everything here works on int64 mantissa coordinates inside the unit frame
[0, 2**bits)^n; n in {1, 2} (interleaved codes must fit an int64, which caps
bits at 31 for n = 2).  This is the batch backend behind the oracles; the
scalar exact API lives in dyadic.py.
"""

import numpy as np

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_M8 = np.uint64(0x00FF00FF00FF00FF)
_M16 = np.uint64(0x0000FFFF0000FFFF)
_M32 = np.uint64(0x00000000FFFFFFFF)


def _spread1(x):
    x = x.astype(np.uint64) & _M32
    x = (x | (x << np.uint64(16))) & _M16
    x = (x | (x << np.uint64(8))) & _M8
    x = (x | (x << np.uint64(4))) & _M4
    x = (x | (x << np.uint64(2))) & _M2
    x = (x | (x << np.uint64(1))) & _M1
    return x


def _compact1(x):
    x = x.astype(np.uint64) & _M1
    x = (x | (x >> np.uint64(1))) & _M2
    x = (x | (x >> np.uint64(2))) & _M4
    x = (x | (x >> np.uint64(4))) & _M8
    x = (x | (x >> np.uint64(8))) & _M16
    x = (x | (x >> np.uint64(16))) & _M32
    return x


def encode(coords, bits):
    """Interleave integer coordinates (N, n) -> int64 codes; digit nu of
    coordinate i sits at position nu*n + i."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim == 1:
        coords = coords[:, None]
    n = coords.shape[1]
    if np.any(coords < 0) or np.any(coords >= (1 << bits)):
        raise ValueError("coordinates outside the unit frame")
    if n == 1:
        return coords[:, 0].copy()
    if n == 2:
        if bits > 31:
            raise ValueError("n=2 interleaving requires bits <= 31")
        return (_spread1(coords[:, 0]) | (_spread1(coords[:, 1]) << np.uint64(1))).astype(np.int64)
    raise NotImplementedError("vectorized codes support n in {1, 2}")


def decode(codes, n, bits):
    codes = np.asarray(codes)
    if n == 1:
        return codes.astype(np.int64)[:, None]
    if n == 2:
        u = codes.astype(np.uint64)
        x = _compact1(u).astype(np.int64)
        y = _compact1(u >> np.uint64(1)).astype(np.int64)
        return np.stack([x, y], axis=1)
    raise NotImplementedError


class StaticRMQ:
    """Sparse table for vectorized min/argmin over half-open index ranges."""

    def __init__(self, values):
        values = np.asarray(values)
        m = len(values)
        self.n = m
        self.values = values
        self._tab = [np.arange(m)]
        k = 1
        while (1 << k) <= m:
            half = 1 << (k - 1)
            prev = self._tab[k - 1]
            a = prev[: m - (1 << k) + 1]
            b = prev[half: half + m - (1 << k) + 1]
            take_b = values[b] < values[a]
            self._tab.append(np.where(take_b, b, a))
            k += 1

    def argmin(self, lo, hi):
        """Vectorized argmin over [lo, hi); empty ranges return -1."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        out = np.full(lo.shape, -1, dtype=np.int64)
        ok = hi > lo
        if not np.any(ok):
            return out
        l, h = lo[ok], hi[ok]
        span = h - l
        k = (np.log2(span)).astype(np.int64)
        k = np.minimum(k, len(self._tab) - 1)
        w = np.int64(1) << k
        maxk = int(k.max())
        ia = np.empty(len(l), dtype=np.int64)
        ib = np.empty(len(l), dtype=np.int64)
        for kk in range(maxk + 1):
            sel = k == kk
            if not np.any(sel):
                continue
            tab = self._tab[kk]
            ia[sel] = tab[l[sel]]
            ib[sel] = tab[h[sel] - w[sel]]
        pick_b = self.values[ib] < self.values[ia]
        out[ok] = np.where(pick_b, ib, ia)
        return out

    def min(self, lo, hi, empty=None):
        idx = self.argmin(lo, hi)
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)],
                       np.inf if empty is None else empty)
        return out


class PointIndex:
    """Morton-sorted point set with exact count/min/max/diam range stats.

    Together with a kd-tree for nearest neighbors this plays the role of the
    approximate-nearest-neighbor tree: counts, minima, representatives and
    diameters over dyadic cells are exact, queries are O(log N).
    """

    def __init__(self, coords_int, bits):
        coords_int = np.asarray(coords_int, dtype=np.int64)
        if coords_int.ndim == 1:
            coords_int = coords_int[:, None]
        self.bits = bits
        self.n = coords_int.shape[1]
        codes = encode(coords_int, bits)
        order = np.argsort(codes, kind="stable")
        self.order = order             # sorted position -> original index
        self.codes = codes[order]
        self.coords = coords_int[order]
        self._coord_min = [StaticRMQ(self.coords[:, i]) for i in range(self.n)]
        self._coord_max = [StaticRMQ(-self.coords[:, i]) for i in range(self.n)]
        self._aux = {}

    def __len__(self):
        return len(self.codes)

    def attach(self, name, values):
        """Attach per-point values (original order) for range-min queries."""
        v = np.asarray(values)[self.order]
        self._aux[name] = (v, StaticRMQ(v))

    def range_of_codes(self, lo, hi):
        i0 = np.searchsorted(self.codes, lo, side="left")
        i1 = np.searchsorted(self.codes, hi, side="left")
        return i0, i1

    def count(self, lo, hi):
        i0, i1 = self.range_of_codes(lo, hi)
        return i1 - i0

    def min_aux(self, name, lo, hi):
        v, rmq = self._aux[name]
        i0, i1 = self.range_of_codes(lo, hi)
        return rmq.min(i0, i1)

    def argmin_aux(self, name, lo, hi):
        """Original-order index of the per-range minimizer (-1 when empty)."""
        _, rmq = self._aux[name]
        i0, i1 = self.range_of_codes(lo, hi)
        idx = rmq.argmin(i0, i1)
        out = np.where(idx >= 0, self.order[np.maximum(idx, 0)], -1)
        return out

    def coord_bounds(self, ranges):
        """Per-coordinate (min, max) over a union of sorted ranges (i0, i1) stacked
        as arrays of shape (Q, R): returns (Q, n) mins and maxes plus an
        any-point mask; sentinel +-2**62 in empty slots."""
        i0, i1 = ranges
        BIG = np.int64(1) << 62
        mins = np.full(i0.shape[:-1] + (self.n,), BIG, dtype=np.int64)
        maxs = np.full(i0.shape[:-1] + (self.n,), -BIG, dtype=np.int64)
        any_pt = np.zeros(i0.shape[:-1], dtype=bool)
        for i in range(self.n):
            lo_v = self._coord_min[i].min(i0.ravel(), i1.ravel()).reshape(i0.shape)
            hi_v = -self._coord_max[i].min(i0.ravel(), i1.ravel()).reshape(i0.shape)
            has = np.isfinite(lo_v)
            any_pt |= np.any(has, axis=-1)
            lo_v = np.where(has, lo_v, float(BIG))
            hi_v = np.where(has, hi_v, float(-BIG))
            mins[..., i] = np.min(lo_v, axis=-1).astype(np.int64)
            maxs[..., i] = np.max(hi_v, axis=-1).astype(np.int64)
        return mins, maxs, any_pt


def cell_codes(corner, level, bits, n, dilate_num=1, dilate_den=1, cell_shift=0):
    """Dyadic cell decomposition of the dilate (num/den)*Q of cubes Q.

    Returns per-cube arrays (Q, ncells) of [lo, hi) code ranges covering the
    dilate by cells of side 2**(bits-level-cell_shift).  The dilate half-width
    (num/den)*side/2 must be an integer multiple of the cell side.
    """
    corner = np.asarray(corner, dtype=np.int64)
    if corner.ndim == 1:
        corner = corner[:, None]
    side = (np.int64(1) << (bits - np.asarray(level, dtype=np.int64)))
    cell = side >> cell_shift
    if np.any(cell < 1):
        raise ValueError("cell below one mantissa unit")
    # margin on each side of Q, in cells
    pad_num = (dilate_num - dilate_den)
    # margin = pad_num/den * side/2 ; cells_per_side = side/cell = 2**cell_shift
    k = 1 << cell_shift
    if (pad_num * k) % (2 * dilate_den) != 0:
        raise ValueError("dilate is not aligned to the cell grid")
    pad_cells = (pad_num * k) // (2 * dilate_den)
    per_axis = k + 2 * pad_cells
    offsets = np.arange(-pad_cells, k + pad_cells)
    if n == 1:
        starts = corner[:, 0][:, None] + offsets[None, :] * cell[:, None]
        lo = starts
    else:
        ox, oy = np.meshgrid(offsets, offsets, indexing="ij")
        sx = corner[:, 0][:, None] + ox.ravel()[None, :] * cell[:, None]
        sy = corner[:, 1][:, None] + oy.ravel()[None, :] * cell[:, None]
        flat = np.stack([sx.ravel(), sy.ravel()], axis=1)
        valid = np.all((flat >= 0) & (flat < (1 << bits)), axis=1)
        codes = np.zeros(len(flat), dtype=np.int64)
        codes[valid] = encode(flat[valid], bits)
        codes[~valid] = -1
        lo = codes.reshape(sx.shape)
    if n == 1:
        valid = (lo >= 0) & (lo < (1 << bits))
        lo = np.where(valid, lo, -1)
    span = (cell.astype(np.int64) ** n)[:, None] * np.int64(1) if n == 1 else None
    if n == 1:
        hi = np.where(lo >= 0, lo + cell[:, None], -1)
    else:
        cell_t = (cell * cell)[:, None]
        hi = np.where(lo >= 0, lo + cell_t, -1)
    return lo, hi


class CubePartition:
    """A finite set of disjoint dyadic cubes inside the unit frame, sorted in
    Morton order; supports vectorized point location and containment ranges."""

    def __init__(self, corner, level, bits, n):
        corner = np.asarray(corner, dtype=np.int64)
        if corner.ndim == 1:
            corner = corner[:, None]
        level = np.asarray(level, dtype=np.int64)
        self.bits = bits
        self.n = n
        codes = encode(corner, bits)
        order = np.argsort(codes, kind="stable")
        self.corner = corner[order]
        self.level = level[order]
        self.codes = codes[order]
        self.side = (np.int64(1) << (bits - self.level))
        self.t = (bits - self.level) * n          # log2 of code-span
        self.span = np.int64(1) << self.t
        self.level_rmq = StaticRMQ(self.level)    # min level = largest cube
        self.neglevel_rmq = StaticRMQ(-self.level)

    def __len__(self):
        return len(self.codes)

    def locate_codes(self, codes):
        """Index of the cube containing each code; -1 when none does."""
        codes = np.asarray(codes, dtype=np.int64)
        idx = np.searchsorted(self.codes, codes, side="right") - 1
        ok = idx >= 0
        good = np.zeros(codes.shape, dtype=bool)
        safe = np.maximum(idx, 0)
        good[ok] = codes[ok] < self.codes[safe][ok] + self.span[safe][ok]
        return np.where(ok & good, idx, -1)

    def locate_points(self, coords_int):
        coords_int = np.asarray(coords_int, dtype=np.int64)
        if coords_int.ndim == 1:
            coords_int = coords_int[:, None]
        inside = np.all((coords_int >= 0) & (coords_int < (1 << self.bits)), axis=1)
        out = np.full(len(coords_int), -1, dtype=np.int64)
        if np.any(inside):
            out[inside] = self.locate_codes(encode(coords_int[inside], self.bits))
        return out

    def contained_range(self, lo, hi):
        """Sorted index range of cubes entirely inside code range [lo, hi)."""
        i0 = np.searchsorted(self.codes, lo, side="left")
        i1 = np.searchsorted(self.codes, hi, side="left")
        return i0, i1

    def find_index(self, corner, level):
        """Exact index of a cube given corner/level arrays; -1 if absent."""
        corner = np.asarray(corner, dtype=np.int64)
        if corner.ndim == 1:
            corner = corner[:, None]
        level = np.asarray(level, dtype=np.int64)
        inside = np.all((corner >= 0) & (corner < (1 << self.bits)), axis=1)
        out = np.full(len(corner), -1, dtype=np.int64)
        if np.any(inside):
            codes = encode(corner[inside], self.bits)
            idx = np.searchsorted(self.codes, codes, side="left")
            idx = np.minimum(idx, len(self.codes) - 1)
            hit = (self.codes[idx] == codes) & (self.level[idx] == level[inside])
            tmp = np.where(hit, idx, -1)
            out[inside] = tmp
        return out

    def min_level_over_cells(self, lo, hi):
        """Smallest cube level (i.e. the largest cube) intersecting each dyadic
        cell [lo, hi); inf-like sentinel 127 when the cell is off-partition.

        Cells must each be dyadic boxes: then a partition cube either contains
        the cell or is contained in it.
        """
        shape = lo.shape
        lo_f, hi_f = lo.ravel(), hi.ravel()
        valid = lo_f >= 0
        i0 = np.searchsorted(self.codes, np.where(valid, lo_f, 0), side="left")
        i1 = np.searchsorted(self.codes, np.where(valid, hi_f, 0), side="left")
        inner = self.level_rmq.min(i0, i1, empty=np.inf)
        # containing cube (when no cube is inside the cell)
        container = self.locate_codes(np.where(valid, lo_f, 0))
        cont_lvl = np.where(container >= 0, self.level[np.maximum(container, 0)], np.inf)
        out = np.minimum(inner, cont_lvl)
        out = np.where(valid, out, np.inf)
        return out.reshape(shape)

    def max_level_over_cells(self, lo, hi):
        """Largest cube level (smallest cube) meeting each dyadic cell."""
        shape = lo.shape
        lo_f, hi_f = lo.ravel(), hi.ravel()
        valid = lo_f >= 0
        i0 = np.searchsorted(self.codes, np.where(valid, lo_f, 0), side="left")
        i1 = np.searchsorted(self.codes, np.where(valid, hi_f, 0), side="left")
        inner = -self.neglevel_rmq.min(i0, i1, empty=np.inf)
        container = self.locate_codes(np.where(valid, lo_f, 0))
        cont_lvl = np.where(container >= 0, self.level[np.maximum(container, 0)], -np.inf)
        out = np.maximum(inner, cont_lvl)
        out = np.where(valid, out, -np.inf)
        return out.reshape(shape)

    def argmax_level_witness(self, lo, hi):
        """(max_level, witness index) per dyadic cell [lo, hi): the smallest
        partition cube meeting the cell; level -inf / witness -1 off-partition."""
        shape = lo.shape
        lo_f, hi_f = lo.ravel(), hi.ravel()
        valid = lo_f >= 0
        i0 = np.searchsorted(self.codes, np.where(valid, lo_f, 0), side="left")
        i1 = np.searchsorted(self.codes, np.where(valid, hi_f, 0), side="left")
        arg = self.neglevel_rmq.argmin(i0, i1)
        inner = np.where(arg >= 0, self.level[np.maximum(arg, 0)], -np.inf)
        container = self.locate_codes(np.where(valid, lo_f, 0))
        cont_lvl = np.where(container >= 0, self.level[np.maximum(container, 0)], -np.inf)
        use_cont = cont_lvl > inner
        lvl = np.where(use_cont, cont_lvl, inner)
        wit = np.where(use_cont, container, arg)
        lvl = np.where(valid, lvl, -np.inf)
        wit = np.where(valid, wit, -1)
        return lvl.reshape(shape), wit.reshape(shape)

    def argmin_level_over_cells(self, lo, hi):
        """(min_level, witness index) per cell; witness -1 off-partition."""
        shape = lo.shape
        lo_f, hi_f = lo.ravel(), hi.ravel()
        valid = lo_f >= 0
        i0 = np.searchsorted(self.codes, np.where(valid, lo_f, 0), side="left")
        i1 = np.searchsorted(self.codes, np.where(valid, hi_f, 0), side="left")
        arg = self.level_rmq.argmin(i0, i1)
        inner = np.where(arg >= 0, self.level[np.maximum(arg, 0)], np.inf)
        container = self.locate_codes(np.where(valid, lo_f, 0))
        cont_lvl = np.where(container >= 0, self.level[np.maximum(container, 0)], np.inf)
        use_cont = cont_lvl < inner
        lvl = np.where(use_cont, cont_lvl, inner)
        wit = np.where(use_cont, container, arg)
        lvl = np.where(valid, lvl, np.inf)
        wit = np.where(valid, wit, -1)
        return lvl.reshape(shape), wit.reshape(shape)

    def neighbor_probe_points(self, idx):
        """Integer probe points just outside each cube's boundary, spaced to
        hit every neighbor at least 1/8 the cube's size: returns (idx_rep,
        probes) with probes (K, n)."""
        corner = self.corner[idx]
        side = self.side[idx]
        reps, probes = [], []
        # per-axis probe offsets: one unit outside each face, ring cells along faces
        for j in range(len(idx)):
            s = int(side[j])
            e = max(s // 8, 1)
            inner = list(range(e // 2, s, e))
            vals = []
            for i in range(self.n):
                a = int(corner[j, i])
                vals.append([a - 1] + [a + o for o in inner] + [a + s])
            if self.n == 1:
                pts = [(v,) for v in vals[0] if v == corner[j, 0] - 1 or v == corner[j, 0] + s]
            else:
                pts = []
                lo0, hi0 = corner[j, 0] - 1, corner[j, 0] + s
                lo1, hi1 = corner[j, 1] - 1, corner[j, 1] + s
                for v0 in vals[0]:
                    for v1 in vals[1]:
                        if v0 in (lo0, hi0) or v1 in (lo1, hi1):
                            pts.append((v0, v1))
            reps.extend([idx[j]] * len(pts))
            probes.extend(pts)
        return np.array(reps, dtype=np.int64), np.array(probes, dtype=np.int64).reshape(-1, self.n)
