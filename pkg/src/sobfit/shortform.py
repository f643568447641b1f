"""Sparse containers for assisted functionals.

An assisted functional acts on (f, P) as

    xi(f, P) = sum_k c_k f(z_{i_k}) + sum_r g_r omega_{j_r}(f) + ppart . Pvec

where Pvec = (d^alpha P(0))_alpha and the omegas are precomputed point-form
assists from a shared append-only pool.  Storage is flat typed arrays
(CSR-style), so million-row lists stay compact and evaluation is a handful
of vectorized reductions.
"""

from array import array

import numpy as np


class AssistPool:
    """Append-only pool of point-form functionals omega(f) = sum c_k f(z_k)."""

    def __init__(self):
        self.ptr = array("q", [0])
        self.idx = array("q")
        self.coef = array("d")

    def __len__(self):
        return len(self.ptr) - 1

    def add(self, idx, coef):
        self.idx.extend(int(i) for i in idx)
        self.coef.extend(float(c) for c in coef)
        self.ptr.append(len(self.idx))
        return len(self.ptr) - 2

    def depths(self):
        return np.diff(np.frombuffer(self.ptr, dtype=np.int64))

    def _frozen(self):
        cur = len(self.idx)
        cache = getattr(self, "_frozen_cache", None)
        if cache is None or cache[0] != cur:
            arrs = (np.frombuffer(self.idx, dtype=np.int64) if len(self.idx)
                    else np.zeros(0, dtype=np.int64),
                    np.frombuffer(self.coef, dtype=float) if len(self.coef)
                    else np.zeros(0),
                    np.frombuffer(self.ptr, dtype=np.int64))
            cache = (cur, arrs)
            self._frozen_cache = cache
        return cache[1]

    def evaluate(self, f):
        """Values of every assist on the data vector f."""
        f = np.asarray(f, dtype=float)
        if len(self.ptr) <= 1:
            return np.zeros(0)
        idx, coef, ptr = self._frozen()
        out = np.zeros(len(ptr) - 1)
        if len(idx):
            vals = np.append(coef * f[idx], 0.0)  # sentinel keeps reduceat sane
            red = np.add.reduceat(vals, ptr[:-1])
            nz = np.diff(ptr) > 0
            out[nz] = red[nz]
        return out

    def expand_row(self, j):
        a, b = self.ptr[j], self.ptr[j + 1]
        return self.idx[a:b], self.coef[a:b]


class FunctionalList:
    """A growable flat list of assisted functionals with dense P-parts."""

    def __init__(self, D):
        self.D = D
        self.fp_ptr = array("q", [0])
        self.fp_idx = array("q")
        self.fp_coef = array("d")
        self.ap_ptr = array("q", [0])
        self.ap_idx = array("q")
        self.ap_coef = array("d")
        self.pp = array("d")

    def __len__(self):
        return len(self.fp_ptr) - 1

    def add(self, f_idx=(), f_coef=(), a_idx=(), a_coef=(), ppart=None):
        self.fp_idx.extend(int(i) for i in f_idx)
        self.fp_coef.extend(float(c) for c in f_coef)
        self.fp_ptr.append(len(self.fp_idx))
        self.ap_idx.extend(int(i) for i in a_idx)
        self.ap_coef.extend(float(c) for c in a_coef)
        self.ap_ptr.append(len(self.ap_idx))
        if ppart is None:
            self.pp.extend([0.0] * self.D)
        else:
            arr = np.asarray(ppart, dtype=float).reshape(self.D)
            self.pp.extend(arr.tolist())
        return len(self.fp_ptr) - 2

    def copy_row_from(self, other, l):
        """Adopt row l of another list (fast slice copies)."""
        a, b = other.fp_ptr[l], other.fp_ptr[l + 1]
        self.fp_idx.extend(other.fp_idx[a:b])
        self.fp_coef.extend(other.fp_coef[a:b])
        self.fp_ptr.append(len(self.fp_idx))
        a, b = other.ap_ptr[l], other.ap_ptr[l + 1]
        self.ap_idx.extend(other.ap_idx[a:b])
        self.ap_coef.extend(other.ap_coef[a:b])
        self.ap_ptr.append(len(self.ap_idx))
        self.pp.extend(other.pp[l * self.D: (l + 1) * self.D])

    def fp_row(self, l):
        a, b = self.fp_ptr[l], self.fp_ptr[l + 1]
        return self.fp_idx[a:b], self.fp_coef[a:b]

    def ap_row(self, l):
        a, b = self.ap_ptr[l], self.ap_ptr[l + 1]
        return self.ap_idx[a:b], self.ap_coef[a:b]

    def ppart_row(self, l):
        return np.frombuffer(self.pp, dtype=float,
                             count=self.D, offset=8 * self.D * l)

    def ppart_matrix(self):
        return np.frombuffer(self.pp, dtype=float).reshape(len(self), self.D) \
            if len(self) else np.zeros((0, self.D))

    def f_depth(self, l):
        return (self.fp_ptr[l + 1] - self.fp_ptr[l]
                + self.ap_ptr[l + 1] - self.ap_ptr[l])

    def evaluate(self, f, assist_values, Pvec=None):
        """Values xi_l(f, P) for all functionals (vectorized)."""
        L = len(self)
        if L == 0:
            return np.zeros(0)
        f = np.asarray(f, dtype=float)
        out = np.zeros(L)
        fp_ptr = np.frombuffer(self.fp_ptr, dtype=np.int64)
        if len(self.fp_idx):
            fp_idx = np.frombuffer(self.fp_idx, dtype=np.int64)
            fp_coef = np.frombuffer(self.fp_coef, dtype=float)
            vals = np.append(fp_coef * f[fp_idx], 0.0)
            red = np.add.reduceat(vals, fp_ptr[:-1])
            nz = np.diff(fp_ptr) > 0
            out[nz] += red[nz]
        ap_ptr = np.frombuffer(self.ap_ptr, dtype=np.int64)
        if len(self.ap_idx):
            ap_idx = np.frombuffer(self.ap_idx, dtype=np.int64)
            ap_coef = np.frombuffer(self.ap_coef, dtype=float)
            av = np.asarray(assist_values, dtype=float)
            vals = np.append(ap_coef * av[ap_idx], 0.0)
            red = np.add.reduceat(vals, ap_ptr[:-1])
            nz = np.diff(ap_ptr) > 0
            out[nz] += red[nz]
        if Pvec is not None:
            out += self.ppart_matrix() @ np.asarray(Pvec, dtype=float)
        return out


class RMap:
    """Linear map (f, P) -> polynomial written row-wise in jet coordinates at
    the origin: row_alpha(f, P) = pmat[alpha] . Pvec + assist terms."""

    __slots__ = ("pmat", "rows_a", "trivial")

    def __init__(self, D):
        self.pmat = np.eye(D)
        self.rows_a = [([], []) for _ in range(D)]  # per-row assist refs
        self.trivial = False   # identity map: compositions reduce to no-ops

    @classmethod
    def identity(cls, D):
        return cls(D)

    def apply_rows(self, row_weights):
        """Compose a functional's P-part with this map: returns (ppart,
        assist_idx, assist_coef) of P -> row_weights . (this map)(f, P)."""
        w = np.asarray(row_weights, dtype=float)
        ppart = self.pmat.T @ w
        a_idx, a_coef = [], []
        for r, wr in enumerate(w):
            if wr == 0.0:
                continue
            ri, rc = self.rows_a[r]
            a_idx.extend(ri)
            a_coef.extend(wr * c for c in rc)
        return ppart, a_idx, a_coef
