"""Stopping-time decompositions of the unit cube and of the whole plane,
their point-location oracles, neighbor enumeration, and partitions of unity
with jet-evaluable cutoffs.
"""

import numpy as np

from .mortons import CubePartition
from ._splines import compose_eta_jet, reciprocal_jet, tensor_bump_jet


def build_cz(geom, delta=None, K=1.0, old: CubePartition = None, count_rule=True):
    """Maximal dyadic cubes of the unit cube that are OK, where OK(Q) means
    [count_rule and #(E n 3Q) <= 1] or [delta(x) >= K * side(Q) on E n 3Q]
    or [old is given and Q belongs to old].

    Built by breadth-first subdivision of the non-OK frontier; O(#CZ log N).
    """
    bits, n = geom.bits, geom.n
    if delta is not None:
        geom.index.attach("_delta", np.asarray(delta, dtype=float))
    corners = [np.zeros((1, n), dtype=np.int64)]
    levels = [np.zeros(1, dtype=np.int64)]
    out_c, out_l = [], []
    frontier_c, frontier_l = corners[0], levels[0]
    while len(frontier_c):
        res = geom.rcz_query(frontier_c, frontier_l, dilate=3,
                             values="_delta" if delta is not None else None)
        side = (np.int64(1) << (bits - frontier_l)).astype(float) / geom.scale
        ok = np.zeros(len(frontier_c), dtype=bool)
        if count_rule:
            ok |= res["count"] <= 1
        if delta is not None:
            ok |= res["min"] >= K * side - 1e-15
        if old is not None:
            ok |= old.find_index(frontier_c, frontier_l) >= 0
        out_c.append(frontier_c[ok])
        out_l.append(frontier_l[ok])
        bad_c, bad_l = frontier_c[~ok], frontier_l[~ok]
        if len(bad_c) and np.any(bad_l >= bits):
            raise OverflowError("subdivision reached the bit budget; points too close")
        if not len(bad_c):
            break
        half = (np.int64(1) << (bits - bad_l - 1))
        kids_c, kids_l = [], []
        for off in range(2 ** n):
            shift = np.array([(off >> i) & 1 for i in range(n)], dtype=np.int64)
            kids_c.append(bad_c + shift[None, :] * half[:, None])
            kids_l.append(bad_l + 1)
        frontier_c = np.concatenate(kids_c, axis=0)
        frontier_l = np.concatenate(kids_l, axis=0)
    corner = np.concatenate(out_c, axis=0)
    level = np.concatenate(out_l, axis=0)
    return CubePartition(corner, level, bits, n)


def build_whitney(geom, min_gap_units=4):
    """The classic decomposition: maximal dyadic cubes with #(E n 3Q) <= 1."""
    return build_cz(geom, delta=None, count_rule=True)


class PlaneExtension:
    """The decomposition of the whole plane extending an interior partition:
    outside the unit frame, maximal dyadic cubes with [side == 1 or origin
    not in 2Q]; inside, the given partition."""

    def __init__(self, interior: CubePartition):
        self.interior = interior
        self.bits = interior.bits
        self.n = interior.n

    def exterior_cube(self, x_units):
        """(corner, level) of the exterior cube containing a point given in
        unit-cube coordinates (floats, possibly far outside [0, 1))."""
        x = np.asarray(x_units, dtype=float)
        # try unit-size cube first
        corner = np.floor(x).astype(np.int64)
        if np.all(corner >= -1) and np.all(corner <= 0) and not np.all(corner == 0):
            pass
        if self._accept(corner, 0):
            return tuple(corner), 0
        lvl = 0
        while lvl > -(64):
            lvl -= 1
            side = 1 << (-lvl)
            corner = (np.floor(x / side) * side).astype(np.int64)
            if self._accept(corner, lvl):
                return tuple(corner), lvl
        raise OverflowError("query magnitude beyond bit budget")

    def _accept(self, corner, lvl):
        """Maximality test: [side == 1 or 0 not in 2Q] and parent violates."""
        side = 1 << (-lvl)
        ok = (side == 1) or not self._two_q_contains_origin(corner, side)
        if not ok:
            return False
        pside = side * 2
        pcorner = (np.floor(np.asarray(corner, dtype=float) / pside) * pside).astype(np.int64)
        parent_ok = (pside == 1) or not self._two_q_contains_origin(pcorner, pside)
        return not parent_ok

    @staticmethod
    def _two_q_contains_origin(corner, side):
        # 2Q = [c - side/2, c + 3 side/2) per axis
        c = np.asarray(corner, dtype=float)
        return bool(np.all((-side / 2.0 <= -c) & (-c < 3 * side / 2.0)))

    def locate_units(self, x_units):
        """(kind, payload): ('in', index) for interior points, ('out',
        (corner, level)) outside the unit cube."""
        x = np.asarray(x_units, dtype=float)
        if np.all(x >= 0) and np.all(x < 1):
            xi = np.clip((x * (1 << self.bits)).astype(np.int64), 0, (1 << self.bits) - 1)
            idx = self.interior.locate_points(xi[None, :])[0]
            return "in", int(idx)
        return "out", self.exterior_cube(x)


def touching_pairs(part: CubePartition, subset=None):
    """All ordered touching pairs (i, j), i != j, of a partition with
    neighbor-size ratio at most 2 (good geometry); vectorized probes."""
    n, bits = part.n, part.bits
    idx_all = np.arange(len(part)) if subset is None else np.asarray(subset)
    outside = [np.array([True, False, False, True])] * n
    if n == 1:
        combos = [(0,), (3,)]
    else:
        combos = [(u, v) for u in range(4) for v in range(4)
                  if outside[0][u] or outside[1][v]]
    chunks = []
    CH = 131072
    for a0 in range(0, len(idx_all), CH):
        idx = idx_all[a0: a0 + CH]
        corner = part.corner[idx]
        side = part.side[idx]
        qtr = np.maximum(side // 4, 1)
        # per-axis probe offsets: {-1, +quarter, +3 quarters, +side}
        vals = []
        for i in range(n):
            a = corner[:, i]
            vals.append(np.stack([a - 1, a + qtr, a + 3 * qtr, a + side], axis=1))
        pts = np.empty((len(idx), len(combos), n), dtype=np.int64)
        for k, cb in enumerate(combos):
            for i in range(n):
                pts[:, k, i] = vals[i][:, cb[i]]
        flat = pts.reshape(-1, n)
        loc = part.locate_points(flat).reshape(len(idx), len(combos))
        src = np.repeat(idx, len(combos)).reshape(len(idx), len(combos))
        ok = (loc >= 0) & (loc != src)
        chunks.append(np.stack([src[ok], loc[ok]], axis=1))
    pairs = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 2), np.int64)
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    pairs = np.unique(pairs, axis=0)
    return pairs


def find_neighbors(part: CubePartition, i):
    """All partition cubes touching cube i, including i itself (the touching
    relation is reflexive); ratio-8 geometry tolerated."""
    corner = part.corner[i]
    side = int(part.side[i])
    n = part.n
    e = max(side // 8, 1)
    axes = []
    for d in range(n):
        a = int(corner[d])
        axes.append([a - 1] + [a + o for o in range(e // 2, side, e)] + [a + side])
    out = {int(i)}
    if n == 1:
        cands = [(axes[0][0],), (axes[0][-1],)]
    else:
        cands = []
        for u in axes[0]:
            for v in axes[1]:
                on_edge = u in (axes[0][0], axes[0][-1]) or v in (axes[1][0], axes[1][-1])
                if on_edge:
                    cands.append((u, v))
    cands = np.asarray(cands, dtype=np.int64)
    loc = part.locate_points(cands)
    for j in loc:
        if j >= 0:
            out.add(int(j))
    return sorted(out)


def find_main_cubes(part: CubePartition, geom):
    """Indices of cubes whose 65/64-dilate meets E, each with a data point
    x(Q) inside the dilate; duplicates removed."""
    pts = geom.coords_int
    home = part.locate_points(pts)
    cubes = np.unique(home[home >= 0])
    # candidates: the home cube of each point plus its touching cubes
    pairs = touching_pairs(part, subset=cubes)
    neigh = {}
    for a, b in pairs:
        neigh.setdefault(int(a), []).append(int(b))
    main = {}
    side_all = part.side
    for k, x in enumerate(pts):
        h = int(home[k])
        if h < 0:
            continue
        for c in [h] + neigh.get(h, []):
            s = int(side_all[c])
            corner = part.corner[c]
            # exact 65/64 membership: 128*(x - corner) in [-s, 128 s + s)
            z = 128 * (x - corner)
            if np.all(z >= -s) and np.all(z < 128 * s + s):
                if c not in main:
                    main[c] = k
    idx = np.array(sorted(main.keys()), dtype=np.int64)
    reps = np.array([main[int(i)] for i in idx], dtype=np.int64)
    return idx, reps


# ---------------------------------------------------------------------------
# partitions of unity

class PartitionOfUnity:
    """Cutoffs theta_Q for a covering family inside a partition: supports in
    (1 + 3r/4)Q, normalized by eta(sum of bumps); jets evaluable anywhere.

    covering: (corner, level) arrays in mantissa units; r is the support
    dilation parameter (the spec's r-bar), a power of two <= 1/4.
    """

    def __init__(self, corner, level, bits, jets, r):
        self.corner = np.atleast_2d(np.asarray(corner, dtype=np.int64))
        self.level = np.asarray(level, dtype=np.int64)
        self.bits = bits
        self.jets = jets
        self.r = r
        self.scale = float(1 << bits)
        self.side = (np.int64(1) << (bits - self.level)) / self.scale
        self.centers = (self.corner / self.scale) + self.side[:, None] / 2.0

    def support_contains(self, q, x):
        half = self.side[q] * (1 + 0.75 * self.r) / 2.0
        return np.all(np.abs(np.asarray(x) - self.centers[q]) < half)

    def bump_jet(self, q, x):
        m, n = self.jets.m, self.jets.n
        half_lo = np.full(n, self.side[q] * (1 + 0.5 * self.r) / 2.0)
        half_hi = np.full(n, self.side[q] * (1 + 0.75 * self.r) / 2.0)
        return tensor_bump_jet(m, n, self.jets, np.asarray(x, dtype=float),
                               self.centers[q], half_lo, half_hi)

    def cutoff_jets(self, active, x):
        """Jets of theta_q at x for the active cube indices (those whose
        support can meet x); the caller supplies every cube whose dilated
        support contains x, plus any others (their jets come out zero)."""
        jets = self.jets
        psi = np.zeros(jets.D)
        bumps = []
        for q in active:
            b = self.bump_jet(q, x)
            bumps.append(b)
            psi = psi + b
        eta_jet = compose_eta_jet(jets.m, jets.n, jets, psi)
        inv = reciprocal_jet(jets.n, jets, eta_jet)
        return [jets.multiply(b, inv) for b in bumps]


def plain_vanilla_oracle(geom, delta):
    """One-time construction for the maximal-OK decomposition of the unit
    cube; the returned callable maps a point (unit coords) to its cube index,
    with the partition accessible as .part."""
    part = build_cz(geom, delta=np.asarray(delta, dtype=float))

    def query(x_unit):
        x = np.asarray(x_unit, dtype=float)
        if np.any(x < 0) or np.any(x >= 1):
            raise ValueError("query outside the unit cube")
        xi = np.clip((x * (1 << part.bits)).astype(np.int64), 0,
                     (1 << part.bits) - 1)
        return int(part.locate_points(xi[None, :])[0])

    query.part = part
    return query


def glorified_oracle(geom, delta, old: CubePartition, K=1.0):
    """Refinement-aware oracle: returns all cubes of the new decomposition
    whose 65/64-dilate contains the query point."""
    part = build_cz(geom, delta=np.asarray(delta, dtype=float), K=K, old=old,
                    count_rule=False)
    pairs = touching_pairs(part)
    order = np.argsort(pairs[:, 0], kind="stable") if len(pairs) else []
    pairs = pairs[order] if len(pairs) else pairs
    ptr = np.searchsorted(pairs[:, 0] if len(pairs) else np.zeros(0),
                          np.arange(len(part) + 1))

    def query(x_unit):
        x = np.asarray(x_unit, dtype=float)
        xi = np.clip((x * (1 << part.bits)).astype(np.int64), 0,
                     (1 << part.bits) - 1)
        home = int(part.locate_points(xi[None, :])[0])
        out = []
        for q in [home] + [int(j) for j in pairs[ptr[home]: ptr[home + 1], 1]]:
            s = int(part.side[q])
            z = 128 * (xi - part.corner[q])
            if np.all(z >= -s) and np.all(z < 128 * s + s):
                out.append(q)
        return sorted(out)

    query.part = part
    return query


def build_pou(corner, level, bits, jets, r):
    """Partition-of-unity factory over a covering family (see the class)."""
    return PartitionOfUnity(corner, level, bits, jets, r)


def eval_pou_jet(pou: PartitionOfUnity, active, x):
    """Jets of the normalized cutoffs of the active cubes at x."""
    return pou.cutoff_jets(active, x)
