import numpy as np
import pytest

from sobfit.constants import default_constants
from sobfit.geometry import EGeometry
from sobfit.induction import (approximate_old_trace_norm, base_case,
                              covering_cubes, induction_step, label_chain)
from sobfit.keystone import KeystoneIndex
from sobfit.multiindex import all_labels_sorted, jet_space
from sobfit.solver import Chart


def setup(pts, m, n, p=2.5, seed_consts=None):
    consts = seed_consts or default_constants(n)
    chart = Chart(np.atleast_2d(pts), consts.bits, n)
    geom = EGeometry(chart.ints, consts.bits)
    jets = jet_space(m, n)
    return geom, jets, consts, chart


class TestBaseCase:
    def test_five_cube_example(self):
        # E = {1/4, 3/4} mapped through the chart keeps one point per cube
        geom, jets, consts, chart = setup(np.array([[0.25], [0.75]]), 1, 1, 2.0)
        st = base_case(geom, jets, 2.0, consts)
        res = geom.rcz_query(st.part.corner, st.part.level, dilate=3)
        assert np.all(res["count"] <= 1)
        # every data point sits in a main cube with that point as x(Q)
        homes = st.part.locate_points(geom.coords_int)
        for k, h in enumerate(homes):
            assert st.main_rank[h] >= 0

    def test_base_functional_value(self):
        # n=1, m=1, p=2: xi = (f(x(Q)) - P(x(Q))) * side^(1/2 - 1)
        geom, jets, consts, chart = setup(np.array([[0.25], [0.75]]), 1, 1, 2.0)
        st = base_case(geom, jets, 2.0, consts)
        f = np.array([1.0, 0.0])
        av = np.zeros(0)
        vals = st.xi.evaluate(f, av, np.zeros(1))
        scale = float(1 << st.part.bits)
        for rnk, q in enumerate(st.main_idx):
            rep = st.main_rep[rnk]
            delta = st.part.side[q] / scale
            want = f[rep] * delta ** (1 / 2.0 - 1)
            assert np.isclose(vals[st.cube_ptr[rnk]], want)

    def test_polynomial_cancellation(self):
        rng = np.random.default_rng(0)
        geom, jets, consts, chart = setup(rng.random((12, 2)), 2, 2, 2.5)
        st = base_case(geom, jets, 2.5, consts)
        # f = P restricted to the snapped points, P in chart units at center
        Pvec = np.array([0.7, -1.1, 0.4])
        from sobfit.induction import P_CENTER
        xs = geom.coords_int / float(1 << geom.bits) - P_CENTER
        f = Pvec[0] + Pvec[1] * xs[:, 0] + Pvec[2] * xs[:, 1]
        vals = st.xi.evaluate(f, np.zeros(0), Pvec)
        assert np.max(np.abs(vals)) <= 1e-9 * max(np.max(np.abs(f)), 1)


class TestInduction:
    def test_nonmonotonic_labels_are_copies(self):
        rng = np.random.default_rng(1)
        geom, jets, consts, chart = setup(rng.random((15, 1)), 2, 1, 2.5)
        states = label_chain(geom, jets, 2.5, consts)
        labels = all_labels_sorted(2, 1)
        # {(0,)} is not monotonic in m=2: its state shares the predecessor's data
        k = labels.index(frozenset({(0,)}))
        assert states[k].kind == "copy"
        assert states[k].xi is states[k - 1].xi

    def test_refinement_chain(self):
        rng = np.random.default_rng(2)
        for m, n in [(1, 1), (1, 2), (2, 1)]:
            geom, jets, consts, chart = setup(rng.random((20, n)), m, n, 2.5)
            states = label_chain(geom, jets, 2.5, consts)
            for prev, cur in zip(states, states[1:]):
                if cur.kind != "step":
                    continue
                own = cur.part.locate_points(
                    prev.part.corner + prev.part.side[:, None] // 2)
                assert np.all(own >= 0)
                # each previous cube fits inside its owner
                C = cur.part.corner[own]
                S = cur.part.side[own]
                assert np.all(C <= prev.part.corner)
                assert np.all(prev.part.corner + prev.part.side[:, None] <= C + S[:, None])

    def test_good_geometry_every_label(self):
        rng = np.random.default_rng(3)
        geom, jets, consts, chart = setup(rng.random((25, 2)), 1, 2, 3.0)
        states = label_chain(geom, jets, 3.0, consts)
        from sobfit.czdecomp import touching_pairs
        for st in states:
            if st.kind == "copy":
                continue
            pairs = touching_pairs(st.part)
            s1 = st.part.side[pairs[:, 0]]
            s2 = st.part.side[pairs[:, 1]]
            assert np.all((s1 <= 2 * s2) & (s2 <= 2 * s1))
            # partitions tile the unit cube exactly
            n = st.part.n
            assert int(np.sum(st.part.side.astype(object) ** n)) == (1 << (st.part.bits * n))

    def test_total_functional_count_linear(self):
        rng = np.random.default_rng(4)
        counts = {}
        for N in (50, 200, 800):
            geom, jets, consts, chart = setup(rng.random((N, 2)), 1, 2, 3.0)
            states = label_chain(geom, jets, 3.0, consts)
            counts[N] = len(states[-1].xi) / N
        vals = list(counts.values())
        assert max(vals) <= 4.0 * min(vals) + 200 / 50

    def test_assist_depth_accounting(self):
        rng = np.random.default_rng(5)
        geom, jets, consts, chart = setup(rng.random((120, 2)), 1, 2, 3.0)
        states = label_chain(geom, jets, 3.0, consts)
        total_depth = int(np.sum(states[-1].pool.depths()))
        assert total_depth <= 400 * 120  # frozen linear bound
        # per-functional assisted depth stays bounded
        xi = states[-1].xi
        for l in range(len(xi)):
            assert xi.f_depth(l) <= 16

    def test_keystone_jet_admissibility(self):
        # the A-part of every keystone map is the exact identity
        rng = np.random.default_rng(6)
        geom, jets, consts, chart = setup(rng.random((20, 2)), 2, 2, 2.5)
        st = base_case(geom, jets, 2.5, consts)
        from sobfit.induction import make_keystone_jets
        ki = KeystoneIndex(st.part, consts)
        A = frozenset({(1, 0), (0, 1)})
        rmaps, _ = make_keystone_jets(st, A, ki, st.pool)
        for R in rmaps.values():
            for al in A:
                r = jets.index[al]
                want = np.zeros(jets.D)
                want[r] = 1.0
                assert np.array_equal(R.pmat[r], want)
                assert R.rows_a[r] == ([], [])

    def test_keystone_jet_near_optimality_p2(self):
        # at p = 2 the keystone map reproduces the exact least-squares optimum
        rng = np.random.default_rng(7)
        geom, jets, consts, chart = setup(rng.random((18, 1)), 2, 1, 2.0)
        st = base_case(geom, jets, 2.0, consts)
        from sobfit.induction import make_keystone_jets
        ki = KeystoneIndex(st.part, consts)
        A = frozenset({(1,)})
        rmaps, pool_lists = make_keystone_jets(st, A, ki, st.pool)
        f = rng.normal(size=18)
        av = st.pool.evaluate(f)
        Pvec = rng.normal(size=jets.D)
        free = [jets.index[(0,)]]
        for q_sharp, members in pool_lists.items():
            rows = []
            for q in members:
                r0 = st.main_rank[q]
                rows.extend(range(st.cube_ptr[r0], st.cube_ptr[r0 + 1]))
            if not rows:
                continue
            R = rmaps[q_sharp]
            Rvec = R.pmat @ Pvec
            for r in range(jets.D):
                ri, rc = R.rows_a[r]
                for j, c in zip(ri, rc):
                    Rvec[r] += c * av[j]
            Pm = st.xi.ppart_matrix()[rows]
            y = np.array([sum(c * f[i] for i, c in zip(*st.xi.fp_row(l))) for l in rows])
            y = y + Pm[:, [jets.index[(1,)]]] @ Pvec[[jets.index[(1,)]]]
            got = np.sum((y + Pm[:, free] @ Rvec[free]) ** 2)
            w, *_ = np.linalg.lstsq(Pm[:, free], -y, rcond=None)
            best = np.sum((y + Pm[:, free] @ w) ** 2)
            assert got <= best + 1e-8 * (1 + best)

    def test_covering_cubes_exact(self):
        rng = np.random.default_rng(8)
        geom, jets, consts, chart = setup(rng.random((30, 2)), 1, 2, 3.0)
        st = base_case(geom, jets, 3.0, consts)
        part = st.part
        for q in rng.choice(len(part), size=10, replace=False):
            lvl = int(part.level[q])
            if lvl < 2:
                continue
            cov = covering_cubes(part, part.corner[q], lvl, consts.t_G)
            s = int(part.side[q])
            lo = part.corner[q] - s // 4
            hi = part.corner[q] + s + s // 4
            brute = [j for j in range(len(part))
                     if np.all(part.corner[j] >= lo)
                     and np.all(part.corner[j] + part.side[j] <= hi)]
            assert sorted(cov.tolist()) == sorted(brute)

    def test_old_trace_norm_band(self):
        rng = np.random.default_rng(9)
        geom, jets, consts, chart = setup(rng.random((15, 2)), 2, 2, 2.5)
        st = base_case(geom, jets, 2.5, consts)
        mus = approximate_old_trace_norm(st)
        P = rng.normal(size=(50, jets.D))
        for rnk in range(len(st.main_idx)):
            a, b = st.cube_ptr[rnk], st.cube_ptr[rnk + 1]
            pp = st.xi.ppart_matrix()[a:b]
            for v in P[:10]:
                lhs = np.sum(np.abs(pp @ v) ** 2.5)
                rhs = np.sum(np.abs(mus[rnk] @ v) ** 2.5)
                if lhs > 0:
                    assert 1 / 8 <= lhs / (rhs + 1e-300) <= 8
