"""Acceptance suite: every criterion runs at its stated tolerance and prints
one pass/fail line.  Frozen empirical bands live in tests/fixtures/bands.json
(calibrated once by demos/calibrate_bands.py and pinned here).
"""

import gc
import json
import pathlib
import time

import numpy as np
import pytest

from sobfit.constants import default_constants
from sobfit.geometry import EGeometry, make_wspd
from sobfit.induction import base_case, label_chain, make_keystone_jets
from sobfit.keystone import KeystoneIndex
from sobfit.lpcalc import compress_norms, optimize_via_matrix
from sobfit.multiindex import jet_space
from sobfit.oracles import brute_lp_min, exact_trace_1d, grid_trace
from sobfit.solver import Chart, solve_homogeneous, solve_inhomogeneous

FIXTURES = pathlib.Path(__file__).parent / "fixtures" / "bands.json"
BANDS = json.loads(FIXTURES.read_text())


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


class TestCriterion1Interpolation:
    def test_interpolation_exactness(self):
        rng = np.random.default_rng(2026)
        cases = []
        for _ in range(90):
            cases.append((1, 1, float(rng.choice([2.5, 3.0, 1.5])),
                          int(rng.integers(10, 501))))
        for _ in range(50):
            cases.append((1, 2, float(rng.choice([2.5, 3.0])),
                          int(rng.integers(10, 251))))
        for _ in range(40):
            cases.append((2, 1, float(rng.choice([2.5, 3.0, 1.5])),
                          int(rng.integers(10, 251))))
        for _ in range(20):
            cases.append((2, 2, float(rng.choice([2.5, 3.0])),
                          int(rng.integers(10, 71))))
        assert len(cases) == 200
        t0 = time.time()
        worst = 0.0
        for (m, n, p, N) in cases:
            pts = rng.random((N, n))
            fs = rng.normal(size=N)
            art = solve_homogeneous(pts, m, n, p)
            E = art.points_raw
            fvals = art.functional_values(fs)  # warms the assist cache
            for i in range(N):
                err = abs(art.query_jet(fs, E[i])[0] - fs[i]) / (1 + abs(fs[i]))
                worst = max(worst, err)
            del art
        elapsed = time.time() - t0
        report("criterion 1 (interpolation exactness, 200 instances)",
               worst <= 1e-8 and elapsed < 120.0,
               f"worst rel err {worst:.2e}, {elapsed:.0f}s")


class TestCriterion2Kernel:
    def test_polynomial_kernel(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for (m, n, p, N) in [(1, 1, 2.5, 60), (1, 2, 3.0, 80),
                             (2, 1, 2.5, 50), (2, 2, 2.5, 40)]:
            pts = rng.random((N, n))
            art = solve_homogeneous(pts, m, n, p)
            E = art.points_raw
            jets = art.jets
            for _ in range(50):
                c = rng.normal(size=jets.D)
                fP = np.zeros(N)
                for k, al in enumerate(jets.alphas):
                    mono = np.ones(N)
                    for ax, e in enumerate(al):
                        mono *= E[:, ax] ** e
                    fP += c[k] * mono
                worst = max(worst, art.norm_proxy(fP) / np.max(np.abs(c)))
        report("criterion 2 (polynomial kernel)", worst <= 1e-6,
               f"worst proxy/coeff {worst:.2e}")


class TestCriterion3Band1d:
    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_band_and_flatness(self, p):
        B = {"2.0": 6.0, "3.0": 6.0}[str(p)]  # frozen from calibration
        lo_cal = BANDS["band_1d"][str(p)]["lo"]
        hi_cal = BANDS["band_1d"][str(p)]["hi"]
        assert hi_cal <= B and lo_cal >= 1.0 / B
        rng = np.random.default_rng(int(p * 10))
        medians = []
        ok_band = True
        for N in (10, 100, 1000):
            ratios = []
            for _ in range(100):
                xs = np.sort(rng.random(N))
                xs = xs[np.concatenate([[True], np.diff(xs) > 1e-7])]
                fs = rng.normal(size=len(xs))
                art = solve_homogeneous(xs[:, None], 1, 1, p)
                r = art.norm_proxy(fs) / exact_trace_1d(art.points_raw[:, 0], fs, p)
                ratios.append(r)
                ok_band &= (1.0 / B) <= r <= B
            medians.append(float(np.median(ratios)))
        drift = max(medians) / min(medians) - 1.0
        report(f"criterion 3 (1-d oracle band, p={p})",
               ok_band and drift < 0.10,
               f"medians {['%.3f' % v for v in medians]}, drift {drift:.3f}")


class TestCriterion4Band2d:
    def test_grid_band(self):
        lo_cal = BANDS["band_2d"]["lo"]
        hi_cal = BANDS["band_2d"]["hi"]
        LO, HI = lo_cal / 2.5, hi_cal * 2.5  # frozen band incl. snapping slack
        rng = np.random.default_rng(44)
        t0 = time.time()
        ok = True
        ratios = []
        for _ in range(20):
            N = int(rng.integers(8, 51))
            pts = rng.random((N, 2))
            fs = rng.normal(size=N)
            art = solve_homogeneous(pts, 1, 2, 3.0)
            v, _ = grid_trace(art.points_raw, fs, 1, 2, 3.0)
            r = art.norm_proxy(fs) / v
            ratios.append(r)
            ok &= LO <= r <= HI
        elapsed = time.time() - t0
        report("criterion 4 (2-d grid-oracle band)",
               ok and elapsed < 600.0,
               f"ratios in [{min(ratios):.2f}, {max(ratios):.2f}], {elapsed:.0f}s")


class TestCriterion5Kernels:
    def test_compress_norms_flat(self):
        rng = np.random.default_rng(5)
        spans = []
        for L in (100, 1000, 10000):
            mu = rng.normal(size=(L, 3))
            out = compress_norms(mu, 2.5)
            ratios = []
            for _ in range(100):
                v = rng.normal(size=3)
                ratios.append(np.sum(np.abs(mu @ v) ** 2.5)
                              / np.sum(np.abs(out @ v) ** 2.5))
            spans.append((min(ratios), max(ratios)))
        ok = all(1 / 12 <= a and b <= 12 for a, b in spans)
        report("criterion 5a (compress-norms band flat in L)", ok,
               f"spans {[(round(a, 2), round(b, 2)) for a, b in spans]}")

    def test_optimize_via_matrix_vs_oracle(self):
        C1 = max(1.05, BANDS["ovm_c1"] * 1.5)  # frozen
        rng = np.random.default_rng(6)
        worst = 1.0
        worst_p2 = 0.0
        for _ in range(200):
            L = int(rng.integers(5, 1001))
            J = int(rng.integers(1, 4))
            p = float(rng.choice([2.0, 2.5, 3.0]))
            a = rng.normal(size=(L, J))
            y = rng.normal(size=L)
            b = optimize_via_matrix(a, p)
            got = np.sum(np.abs(y + a @ (b @ y)) ** p)
            if p == 2.0:
                xs, *_ = np.linalg.lstsq(a, -y, rcond=None)
                best = np.sum((y + a @ xs) ** 2)
                worst_p2 = max(worst_p2, abs(got - best) / max(best, 1e-30))
            elif L <= 400:
                _, best, _ = brute_lp_min(a, y, p)
                if best > 1e-12:
                    worst = max(worst, got / best)
        report("criterion 5b (optimize-via-matrix near-optimality)",
               worst <= C1 and worst_p2 <= 1e-8,
               f"C1 observed {worst:.4f} (frozen {C1:.3f}), p=2 rel {worst_p2:.1e}")


class TestCriterion6Structure:
    def test_wspd_exact(self):
        rng = np.random.default_rng(7)
        pts = rng.random((200, 2))
        pairs = make_wspd(pts, separation=1e10)
        pa, pb = pairs[:, 0], pairs[:, 1]
        ok = True
        for i in range(200):
            for j in range(200):
                if i == j:
                    continue
                d = np.max(np.abs(pts[i] - pts[j]))
                e1 = (np.max(np.abs(pts[i] - pts[pa]), axis=1)
                      + np.max(np.abs(pts[j] - pts[pb]), axis=1))
                e2 = (np.max(np.abs(pts[i] - pts[pb]), axis=1)
                      + np.max(np.abs(pts[j] - pts[pa]), axis=1))
                ok &= min(e1.min(), e2.min()) <= 1e-10 * d
        report("criterion 6a (WSPD covering at literal separation)", bool(ok), "")

    def test_control_tree_and_encapsulation(self):
        import math
        import random
        from sobfit.dyadic import DyadicCuboid
        from sobfit.trees import (BTree, BTreeNode, encapsulate,
                                  make_control_tree)
        rng = random.Random(8)
        ok_count = ok_depth = ok_encap = True
        for _ in range(10):
            size = rng.randrange(2, 500)
            nodes = [BTreeNode()]
            while len(nodes) < size:
                parent = rng.choice([x for x in nodes if len(x.children) < 2])
                child = BTreeNode()
                parent.add_child(child)
                nodes.append(child)
            ct = make_control_tree(BTree(nodes[0]))
            ok_count &= ct.size() == 2 * size - 1
            ok_depth &= ct.depth() <= 1 + math.log(size) / math.log(10 / 9)
        # encapsulation vs brute on random dyadic trees
        BITS = 10
        for _ in range(10):
            top = DyadicCuboid(0, BITS, 1, BITS)
            root = BTreeNode(top)
            nodes = [root]
            while len(nodes) < 120:
                parent = rng.choice([x for x in nodes if len(x.children) < 2])
                q = parent.cuboid
                if q.t == 0:
                    continue
                lo, hi = q.bisect()
                pick = lo if rng.random() < 0.5 else hi
                if any(not pick.disjoint(c.cuboid) for c in parent.children):
                    pick = hi if pick == lo else lo
                    if any(not pick.disjoint(c.cuboid) for c in parent.children):
                        continue
                child = BTreeNode(pick)
                parent.add_child(child)
                nodes.append(child)
            cubs = {x: x.cuboid for x in nodes}
            ct = make_control_tree(BTree(root), mode="deluxe")
            for _ in range(20):
                t = rng.randrange(0, BITS + 1)
                slots = BITS - t
                start = rng.randrange(0, 1 << slots) << t if slots else 0
                q = DyadicCuboid(start, t, 1, BITS)
                got = {x for s in encapsulate(ct, q) for x in s.bt_nodes}
                want = {x for x, c in cubs.items() if q.contains(c)}
                ok_encap &= got == want
        report("criterion 6b (control trees + encapsulation)",
               ok_count and ok_depth and ok_encap, "")

    def test_cz_keystone_disputes_refinement(self):
        from sobfit.czdecomp import touching_pairs
        rng = np.random.default_rng(9)
        ok_part = ok_gg = ok_key = ok_bd = ok_chain = True
        for n in (1, 2):
            N = 300 if n == 1 else 200
            pts = rng.random((N, n))
            consts = default_constants(n)
            chart = Chart(pts, consts.bits, n)
            geom = EGeometry(chart.ints, consts.bits)
            jets = jet_space(1, n)
            states = label_chain(geom, jets, 3.0, consts)
            for st in states:
                if st.kind == "copy":
                    continue
                part = st.part
                # exact partition audit: measures sum to the frame volume
                vol = int(np.sum(part.side.astype(object) ** n))
                ok_part &= vol == (1 << (part.bits * n))
                pr = touching_pairs(part)
                s1, s2 = part.side[pr[:, 0]], part.side[pr[:, 1]]
                ok_gg &= bool(np.all((s1 <= 2 * s2) & (s2 <= 2 * s1)))
            # keystone set equals the brute set on the base decomposition
            st0 = states[0]
            ki = KeystoneIndex(st0.part, consts)
            part = st0.part
            S2 = consts.S2
            brute = []
            for i in range(len(part)):
                s = int(part.side[i])
                lo = part.corner[i] - (S2 // 2) * s
                hi = part.corner[i] + (S2 // 2 + 1) * s
                small = False
                for j in range(len(part)):
                    if part.side[j] < s and \
                       np.all(part.corner[j] + part.side[j] > lo) and \
                       np.all(part.corner[j] < hi):
                        small = True
                        break
                if not small:
                    brute.append(i)
            ok_key &= sorted(np.flatnonzero(ki.keystone).tolist()) == brute
            # dispute completeness by brute pair scan
            pairs = touching_pairs(part)
            disputes = set(map(tuple, ki.border_disputes))
            for (a, b) in map(tuple, pairs):
                ok_bd &= ((a, b) in disputes) == (ki.K[a] != ki.K[b])
            # refinement chain
            for prev, cur in zip(states, states[1:]):
                if cur.kind == "copy":
                    continue
                own = cur.part.locate_points(
                    prev.part.corner + prev.part.side[:, None] // 2)
                C = cur.part.corner[own]
                S = cur.part.side[own]
                ok_chain &= bool(np.all(C <= prev.part.corner)
                                 & np.all(prev.part.corner
                                          + prev.part.side[:, None] <= C + S[:, None]))
        report("criterion 6c (CZ partitions, keystones, disputes, chain)",
               ok_part and ok_gg and ok_key and ok_bd and ok_chain, "")


@pytest.mark.slow
class TestCriterion7Complexity:
    def test_slopes(self):
        rng = np.random.default_rng(10)
        Ns = [1000, 10000, 100000]
        fit_t, query_t, mem_b = [], [], []
        for N in Ns:
            pts = rng.random((N, 2))
            fs = rng.normal(size=N)
            t0 = time.perf_counter()
            art = solve_homogeneous(pts, 1, 2, 3.0)
            t1 = time.perf_counter()
            fit_t.append(t1 - t0)
            E = art.points_raw
            art.query_jet(fs, E[0])
            reps = 200
            t2 = time.perf_counter()
            for i in range(reps):
                art.query_jet(fs, E[i % N])
            t3 = time.perf_counter()
            query_t.append((t3 - t2) / reps)
            xi = art.states[-1].xi
            pool = art.pool
            mem = (8 * (len(xi.fp_idx) + len(xi.fp_coef) + len(xi.fp_ptr)
                        + len(xi.ap_idx) + len(xi.ap_coef) + len(xi.ap_ptr)
                        + len(xi.pp) + len(pool.idx) + len(pool.coef)
                        + len(pool.ptr))
                   + sum(s.part.corner.nbytes + s.part.codes.nbytes
                         + s.part.level.nbytes for s in art.states
                         if s.kind != "copy"))
            mem_b.append(mem)
            del art
            gc.collect()
        lg = np.log10(np.asarray(Ns, dtype=float))
        fit_slope = float(np.polyfit(lg, np.log10(fit_t), 1)[0])
        q_slope = float(np.polyfit(lg, np.log10(query_t), 1)[0])
        m_slope = float(np.polyfit(lg, np.log10(mem_b), 1)[0])
        report("criterion 7 (complexity slopes)",
               fit_slope <= 1.25 and q_slope <= 0.25 and m_slope <= 1.1,
               f"fit {fit_slope:.3f} (<=1.25), query {q_slope:.3f} (<=0.25), "
               f"memory {m_slope:.3f} (<=1.1); fits {['%.1f' % t for t in fit_t]}s")


class TestCriterion8KeystoneJets:
    def test_near_optimality(self):
        C = max(1.05, BANDS["keystone_c"] * 1.5)
        rng = np.random.default_rng(11)
        worst = 1.0
        worst_p2 = 0.0
        trials = 0
        while trials < 50:
            m, n = (2, 1) if trials % 2 else (2, 2)
            p = float(rng.choice([2.0, 2.5, 3.0]))
            N = int(rng.integers(8, 25))
            pts = rng.random((N, n))
            consts = default_constants(n)
            chart = Chart(pts, consts.bits, n)
            geom = EGeometry(chart.ints, consts.bits)
            jets = jet_space(m, n)
            st = base_case(geom, jets, p, consts)
            ki = KeystoneIndex(st.part, consts)
            A = frozenset([jets.alphas[-1]])
            rmaps, pool_lists = make_keystone_jets(st, A, ki, st.pool)
            f = rng.normal(size=N)
            av = st.pool.evaluate(f)
            Pvec = rng.normal(size=jets.D)
            free = [jets.index[b] for b in jets.alphas if b not in A]
            fixed = [jets.index[b] for b in A]
            used = False
            for q_sharp, members in pool_lists.items():
                rows = []
                for q in members:
                    r0 = st.main_rank[q]
                    rows.extend(range(st.cube_ptr[r0], st.cube_ptr[r0 + 1]))
                if not rows:
                    continue
                used = True
                R = rmaps[q_sharp]
                Rvec = R.pmat @ Pvec
                for r in range(jets.D):
                    for j, c in zip(*R.rows_a[r]):
                        Rvec[r] += c * av[j]
                Pm = st.xi.ppart_matrix()[rows]
                y = np.array([sum(c * f[i] for i, c in zip(*st.xi.fp_row(l)))
                              for l in rows])
                y = y + Pm[:, fixed] @ Pvec[fixed]
                got = np.sum(np.abs(y + Pm[:, free] @ Rvec[free]) ** p)
                if p == 2.0:
                    w, *_ = np.linalg.lstsq(Pm[:, free], -y, rcond=None)
                    best = np.sum((y + Pm[:, free] @ w) ** 2)
                    scale = max(best, 1e-8 * float(np.sum(y ** 2)), 1e-12)
                    worst_p2 = max(worst_p2, (got - best) / scale)
                else:
                    _, best, _ = brute_lp_min(Pm[:, free], y, p)
                    if best > 1e-10:
                        worst = max(worst, got / best)
            trials += 1 if used else 0
        report("criterion 8 (keystone-jet near-optimality)",
               worst <= C and worst_p2 <= 1e-8,
               f"C observed {worst:.4f} (frozen {C:.3f}), p=2 excess {worst_p2:.1e}")


class TestCriterion9InhomEdges:
    def test_edge_cases(self):
        art1 = solve_inhomogeneous(np.array([[0.31, 0.47]]), 1, 2, 3.0)
        ok1 = art1.norm_proxy(np.array([2.5])) == 2.5
        art0 = solve_inhomogeneous(np.zeros((0, 2)), 1, 2, 3.0)
        ok0 = art0.norm_proxy(np.zeros(0)) == 0.0
        rng = np.random.default_rng(12)
        a = rng.random((10, 2)) * 0.2
        b = rng.random((12, 2)) * 0.2 + 50.0
        fa, fb = rng.normal(size=10), rng.normal(size=12)
        p = 3.0
        va = solve_inhomogeneous(a, 1, 2, p).norm_proxy(fa)
        vb = solve_inhomogeneous(b, 1, 2, p).norm_proxy(fb)
        vab = solve_inhomogeneous(np.vstack([a, b]), 1, 2, p).norm_proxy(
            np.concatenate([fa, fb]))
        ok_add = abs(vab ** p - (va ** p + vb ** p)) <= 1e-9 * (va ** p + vb ** p)
        report("criterion 9 (inhomogeneous edge cases)",
               ok1 and ok0 and ok_add,
               f"N=1 exact {ok1}, N=0 {ok0}, additivity {ok_add}")
