"""Exact dyadic geometry: points, cubes, cuboids, and the total cuboid order.

Coordinates are stored as integer mantissas against a global frame of `bits`
binary digits per coordinate, so every geometric predicate here is exact
integer arithmetic; floating point never enters.

A dyadic cuboid (the two-scale shape of the stopping-time machinery: either
all sides equal, or the first j sides equal and the rest half as long) is
represented canonically by its image under the bit-interleaving
correspondence psi: a cuboid *is* a pair (start, t) meaning the dyadic
interval [start, start + 2**t) of interleaved codes.  The cuboid order,
least common ancestors and bisection are then plain interval operations.
"""

from dataclasses import dataclass

DEFAULT_BITS = 48


class BitBudgetError(OverflowError):
    """Raised when a coordinate or code would exceed the configured bit budget."""


# ---------------------------------------------------------------------------
# points

@dataclass(frozen=True)
class Point:
    """A point with exact binary-rational coordinates coords[i] * 2**-bits."""
    coords: tuple
    bits: int = DEFAULT_BITS

    def __post_init__(self):
        for c in self.coords:
            if abs(c) >= (1 << (self.bits + 8)):
                raise BitBudgetError(f"coordinate mantissa {c} exceeds bit budget {self.bits}")

    @classmethod
    def from_floats(cls, xs, bits=DEFAULT_BITS):
        return cls(tuple(int(round(x * (1 << bits))) for x in xs), bits)

    def as_floats(self):
        s = float(1 << self.bits)
        return tuple(c / s for c in self.coords)

    @property
    def n(self):
        return len(self.coords)


# ---------------------------------------------------------------------------
# bit interleaving

def interleave(coords, bits):
    """psi: pack n coordinates of `bits` digits each into one integer code.

    Digit nu of coordinate i lands at position nu*n + i, so interleaved codes
    order cuboids exactly as the interval correspondence demands.
    """
    n = len(coords)
    out = 0
    for nu in range(bits):
        for i in range(n):
            out |= ((coords[i] >> nu) & 1) << (nu * n + i)
    return out


def deinterleave(code, n, bits):
    coords = [0] * n
    for nu in range(bits):
        for i in range(n):
            coords[i] |= ((code >> (nu * n + i)) & 1) << nu
    return tuple(coords)


# ---------------------------------------------------------------------------
# dyadic cubes (all sides equal)

@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube prod_i [c_i, c_i + 2**(bits-level)) in mantissa units.

    level counts subdivisions of the unit frame: side = 2**-level.  Negative
    levels (sides > 1) and corners outside [0, 2**bits) are allowed so the
    extended plane decompositions can be represented.
    """
    corner: tuple
    level: int
    bits: int = DEFAULT_BITS

    def __post_init__(self):
        d = self.side_int
        if d < 1:
            raise BitBudgetError(f"cube level {self.level} below bit budget {self.bits}")
        for c in self.corner:
            if c % d != 0:
                raise ValueError("corner is not aligned to the cube's grid")

    @property
    def n(self):
        return len(self.corner)

    @property
    def side_int(self):
        return 1 << (self.bits - self.level) if self.level <= self.bits else 0

    @property
    def side(self):
        return 2.0 ** (-self.level)

    def corner_floats(self):
        s = float(1 << self.bits)
        return tuple(c / s for c in self.corner)

    def center_floats(self):
        s = float(1 << self.bits)
        d = self.side_int
        return tuple((c + d / 2.0) / s for c in self.corner)

    def contains_point(self, p: Point) -> bool:
        d = self.side_int
        return all(a <= x < a + d for a, x in zip(self.corner, p.coords))

    def contains_cube(self, other: "DyadicCube") -> bool:
        d, e = self.side_int, other.side_int
        if e > d:
            return False
        return all(a <= b and b + e <= a + d for a, b in zip(self.corner, other.corner))

    def disjoint(self, other: "DyadicCube") -> bool:
        d, e = self.side_int, other.side_int
        return any(a + d <= b or b + e <= a for a, b in zip(self.corner, other.corner))

    def parent(self):
        d2 = self.side_int * 2
        return DyadicCube(tuple((c // d2) * d2 for c in self.corner), self.level - 1, self.bits)

    def children(self):
        import itertools
        h = self.side_int // 2
        if h == 0:
            raise BitBudgetError("cannot subdivide below the bit budget")
        out = []
        for off in itertools.product((0, 1), repeat=self.n):
            out.append(DyadicCube(tuple(c + o * h for c, o in zip(self.corner, off)),
                                  self.level + 1, self.bits))
        return out

    def dilate_contains_point(self, p: Point, num: int, den: int) -> bool:
        """Exact membership x in (num/den) * Q, the dilate about the center.

        The dilate is the half-open box prod [center - r, center + r) with
        r = (num/den) * side/2; all tests are scaled through by 2*den.
        """
        d = self.side_int
        for a, x in zip(self.corner, p.coords):
            lo = 2 * den * a + den * d - num * d
            hi = 2 * den * a + den * d + num * d
            if not (lo <= 2 * den * x < hi):
                return False
        return True


def touch(q1: DyadicCube, q2: DyadicCube) -> bool:
    """True iff the cubes are equal, or disjoint with intersecting closures."""
    if q1 == q2:
        return True
    if not q1.disjoint(q2):
        return False
    d, e = q1.side_int, q2.side_int
    return all(max(a, b) <= min(a + d, b + e) for a, b in zip(q1.corner, q2.corner))


# ---------------------------------------------------------------------------
# dyadic cuboids via the interval correspondence

@dataclass(frozen=True)
class DyadicCuboid:
    """The dyadic cuboid whose psi-image is [start, start + 2**t) (codes).

    t = (k-1)*n + j encodes the two-scale shape: j long sides of length
    2**(k - bits) and n - j short sides of half that, all inside [0, inf)^n.
    """
    start: int
    t: int
    n: int
    bits: int = DEFAULT_BITS

    def __post_init__(self):
        if self.start < 0 or self.t < 0 or self.t > self.n * self.bits:
            raise BitBudgetError("cuboid outside the representable frame")
        if self.start % (1 << self.t) != 0:
            raise ValueError("start is not aligned: not a dyadic interval")

    @classmethod
    def from_cube(cls, cube: DyadicCube):
        if any(c < 0 for c in cube.corner):
            raise ValueError("cuboids live in [0, inf)^n")
        code = interleave(cube.corner, cube.bits)
        t = (cube.bits - cube.level) * cube.n
        return cls(code, t, cube.n, cube.bits)

    @classmethod
    def from_intervals(cls, intervals, bits=DEFAULT_BITS):
        """Build from factor intervals [a_i, b_i), enforcing the two-scale
        shape rule: all sides equal, or j long sides followed by halves."""
        n = len(intervals)
        sides = [b - a for a, b in intervals]
        if any(s <= 0 or (s & (s - 1)) for s in sides):
            raise ValueError("sides must be positive powers of two")
        long = sides[0]
        j = 0
        while j < n and sides[j] == long:
            j += 1
        if j < n and any(s != long // 2 for s in sides[j:]):
            raise ValueError("shape rule violated: tail sides must equal half the head side")
        if j == n:
            k1 = long.bit_length() - 1   # case (1): t = n*k, k = log2(side)
            t = n * k1
        else:
            k1 = (long // 2).bit_length() - 1
            t = n * k1 + j
        corner = tuple(a for a, _ in intervals)
        for a, s in zip(corner, sides):
            if a % s != 0:
                raise ValueError("interval is not dyadic")
        return cls(interleave(corner, bits), t, n, bits)

    def to_cube(self):
        if self.t % self.n != 0:
            raise ValueError("cuboid is not a cube")
        corner = deinterleave(self.start, self.n, self.bits)
        return DyadicCube(corner, self.bits - self.t // self.n, self.bits)

    @property
    def end(self):
        return self.start + (1 << self.t)

    def intervals(self):
        """The n factor intervals [a_i, b_i) in mantissa units."""
        corner = deinterleave(self.start, self.n, self.bits)
        k1, j = divmod(self.t, self.n)  # k1 = k-1
        sides = [1 << (k1 + 1) if i < j else 1 << k1 for i in range(self.n)]
        return [(a, a + s) for a, s in zip(corner, sides)]

    def contains(self, other: "DyadicCuboid") -> bool:
        return self.start <= other.start and other.end <= self.end

    def disjoint(self, other: "DyadicCuboid") -> bool:
        return self.end <= other.start or other.end <= self.start

    def bisect(self):
        """Lesser and greater dyadic children."""
        if self.t == 0:
            raise BitBudgetError("cannot bisect a single-cell cuboid")
        h = 1 << (self.t - 1)
        lesser = DyadicCuboid(self.start, self.t - 1, self.n, self.bits)
        greater = DyadicCuboid(self.start + h, self.t - 1, self.n, self.bits)
        return lesser, greater

    def contains_code(self, code: int) -> bool:
        return self.start <= code < self.end


def cuboid_compare(q1: DyadicCuboid, q2: DyadicCuboid) -> int:
    """The total order: containers precede contents; -1/0/+1 for Less/Equal/Greater.

    Equivalent interval rule: [a1,b1) < [a2,b2) iff a1 < a2, or a1 == a2 and
    b2 < b1.
    """
    if q1.start != q2.start:
        return -1 if q1.start < q2.start else 1
    if q1.t == q2.t:
        return 0
    return -1 if q1.t > q2.t else 1


def least_common_dyadic_ancestor(q1: DyadicCuboid, q2: DyadicCuboid) -> DyadicCuboid:
    """Smallest dyadic cuboid containing both, by the most significant
    differing bit of the interleaved codes."""
    if q1.n != q2.n or q1.bits != q2.bits:
        raise ValueError("cuboids from different frames")
    lo = min(q1.start, q2.start)
    hi = max(q1.end, q2.end) - 1
    t = max(q1.t, q2.t)
    while (lo >> t) != (hi >> t):
        t += 1
        if t > q1.n * q1.bits:
            raise BitBudgetError("ancestor exceeds the bit budget frame")
    return DyadicCuboid((lo >> t) << t, t, q1.n, q1.bits)
