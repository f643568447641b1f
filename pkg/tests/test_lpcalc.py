import numpy as np
import pytest

from sobfit.lpcalc import (PiecewiseMonomial, approximate_rational,
                           compress_norms, compress_norms_batched,
                           eta_min_numeric, eta_min_symbolic,
                           fit_basis_to_convex_body, optimize_via_matrix)
from sobfit.multiindex import jet_space


def lp_mass(rows, v, p):
    return float(np.sum(np.abs(rows @ v) ** p))


class TestCompressNorms:
    def test_d1_exact(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(40, 1))
        out = compress_norms(w, 2.5)
        v = np.array([1.3])
        assert np.isclose(lp_mass(out, v, 2.5), lp_mass(w, v, 2.5))

    def test_single_functional(self):
        mu = np.array([[1.0, -2.0, 0.5]])
        out = compress_norms(mu, 3.0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            v = rng.normal(size=3)
            assert np.isclose(lp_mass(out, v, 3.0), lp_mass(mu, v, 3.0), rtol=1e-9)

    def test_zero_input(self):
        out = compress_norms(np.zeros((5, 3)), 2.0)
        assert np.allclose(out, 0.0)

    @pytest.mark.parametrize("L", [100, 1000, 10_000])
    def test_band_flat_in_L(self, L):
        # the equivalence band must not drift with L (frozen band 12 for D=3)
        rng = np.random.default_rng(L)
        mu = rng.normal(size=(L, 3))
        out = compress_norms(mu, 2.5)
        ratios = []
        for _ in range(200):
            v = rng.normal(size=3)
            ratios.append(lp_mass(mu, v, 2.5) / lp_mass(out, v, 2.5))
        assert max(ratios) <= 12.0 and min(ratios) >= 1.0 / 12.0

    def test_batched_matches_single(self):
        rng = np.random.default_rng(7)
        blocks = [rng.normal(size=(k, 3)) for k in (4, 1, 9, 0, 2)]
        ptr = np.cumsum([0] + [len(b) for b in blocks])
        mu = np.vstack([b for b in blocks if len(b)])
        out = compress_norms_batched(mu, ptr, 2.5)
        for g, b in enumerate(blocks):
            single = compress_norms(b, 2.5) if len(b) else np.zeros((3, 3))
            v = rng.normal(size=3)
            assert np.isclose(lp_mass(out[g], v, 2.5), lp_mass(single, v, 2.5),
                              rtol=1e-9, atol=1e-12)


class TestOptimizeViaMatrix:
    def test_p2_closed_form_j1(self):
        a = np.array([[1.0], [1.0]])
        b = optimize_via_matrix(a, 2.0)
        y = np.array([0.0, 2.0])
        x = b @ y
        assert np.isclose(x[0], -1.0)
        assert np.isclose(np.sum((y + a @ x) ** 2), 2.0)

    def test_zero_y(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(10, 2))
        b = optimize_via_matrix(a, 3.0)
        assert np.allclose(b @ np.zeros(10), 0.0)

    def test_p2_matches_least_squares(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=(20, 3))
            y = rng.normal(size=20)
            b = optimize_via_matrix(a, 2.0)
            x = b @ y
            xs, *_ = np.linalg.lstsq(a, -y, rcond=None)
            assert np.allclose(np.sum((y + a @ x) ** 2),
                               np.sum((y + a @ xs) ** 2), rtol=1e-8)

    def test_zero_column_is_harmless(self):
        a = np.zeros((6, 2))
        a[:, 0] = np.arange(1.0, 7.0)
        b = optimize_via_matrix(a, 2.5)
        y = np.ones(6)
        x = b @ y
        assert np.all(np.isfinite(x))

    def test_exact_solution_recovered(self):
        # when y lies in the column span the objective must vanish
        rng = np.random.default_rng(9)
        for p in (2.0, 2.5, 3.0):
            a = rng.normal(size=(15, 2))
            xtrue = rng.normal(size=2)
            y = -(a @ xtrue)
            b = optimize_via_matrix(a, p)
            x = b @ y
            assert np.sum(np.abs(y + a @ x) ** p) <= 1e-18


class TestEtaMin:
    def test_A_equals_M_is_pure_constraint(self):
        js = jet_space(2, 1)
        q = np.eye(js.D)
        num, den = eta_min_symbolic(q, list(js.alphas), js, 2.0)
        assert den == [(1.0, 0, 0)]
        # value equals m^delta = sum_alpha q_aa delta^(2(m-|a|)-2n/p)
        for d in (0.5, 1.0, 2.0):
            val = sum(c * d ** (mu + nu / 2.0) for c, mu, nu in num)
            ref = eta_min_numeric(q, list(js.alphas), js, 2.0, d)
            assert np.isclose(val, ref, rtol=1e-10)

    def test_empty_label_is_zero(self):
        js = jet_space(2, 2)
        num, den = eta_min_symbolic(np.eye(js.D), [], js, 2.5)
        assert num == []

    def test_zero_form(self):
        js = jet_space(2, 1)
        num, den = eta_min_symbolic(np.zeros((js.D, js.D)), [(1,)], js, 2.0)
        val = sum(c * 1.7 ** (mu + nu / 2.0) for c, mu, nu in num)
        assert abs(val) <= 1e-12

    @pytest.mark.parametrize("delta", [0.5, 1.0, 2.0])
    def test_identity_form_matches_direct(self, delta):
        js = jet_space(2, 1)
        q = np.eye(js.D)
        A = [(1,)]
        num, den = eta_min_symbolic(q, A, js, 2.0)
        val = (sum(c * delta ** (mu + nu / 2.0) for c, mu, nu in num)
               / sum(c * delta ** (mu + nu / 2.0) for c, mu, nu in den))
        ref = eta_min_numeric(q, A, js, 2.0, delta)
        assert np.isclose(val, ref, rtol=1e-8)

    @pytest.mark.parametrize("m,n,p", [(2, 2, 2.5), (2, 2, 3.0), (2, 1, 2.5)])
    def test_random_forms_match_direct(self, m, n, p):
        js = jet_space(m, n)
        rng = np.random.default_rng(int(10 * p) + m + n)
        for trial in range(8):
            B = rng.normal(size=(js.D, js.D))
            q = B @ B.T + 0.1 * np.eye(js.D)
            labels = [frozenset([js.alphas[-1]]),
                      frozenset(js.alphas[1:])]
            for A in labels:
                from sobfit.multiindex import is_monotonic
                if not is_monotonic(A, m, n):
                    continue
                num, den = eta_min_symbolic(q, A, js, p)
                for delta in (0.3, 1.0, 3.0):
                    dv = sum(c * delta ** (mu + nu / p) for c, mu, nu in den)
                    nv = sum(c * delta ** (mu + nu / p) for c, mu, nu in num)
                    ref = eta_min_numeric(q, A, js, p, delta)
                    assert np.isclose(nv / dv, ref, rtol=1e-6, atol=1e-10)

    def test_monotone_and_slow_variance(self):
        js = jet_space(2, 2)
        rng = np.random.default_rng(4)
        B = rng.normal(size=(js.D, js.D))
        q = B @ B.T
        A = [(1, 0), (0, 1)]
        grid = np.geomspace(0.01, 10, 40)
        vals = [eta_min_numeric(q, A, js, 2.5, d) for d in grid]
        m = js.m
        for (d1, v1), (d2, v2) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
            assert v2 >= v1 - 1e-12 * max(1, v1)
            assert v2 <= (d2 / d1) ** (2 * m) * v1 * (1 + 1e-9) + 1e-15


class TestApproximateRational:
    def test_single_monomials_exact(self):
        pm = approximate_rational([(3.0, 1, 2)], [(1.5, 0, 0)], 2.0)
        assert pm.npieces == 1
        d = np.array([0.1, 1.0, 7.0])
        assert np.allclose(pm(d), 2.0 * d ** 2.0)

    def test_two_term_numerator(self):
        # 1 + delta^2: eta* = 1 below, delta^2 above, plug near delta ~ 1
        pm = approximate_rational([(1.0, 0, 0), (1.0, 2, 0)], [(1.0, 0, 0)], 2.0)
        lo, hi = 5.0 ** -0.5, 5.0 ** 0.5
        d = np.array([lo / 10, hi * 10])
        assert np.isclose(pm(d[0]), 1.0)
        assert np.isclose(pm(d[1]), d[1] ** 2)
        for dv in np.geomspace(0.01, 100, 60):
            eta = 1 + dv ** 2
            assert pm(dv) / eta <= 3.0 and eta / pm(dv) <= 3.0

    def test_random_three_term_band(self):
        rng = np.random.default_rng(12)
        worst = 0.0
        for _ in range(200):
            p = rng.choice([2.0, 2.5, 3.0])
            num = [(abs(rng.normal()) + 0.1, int(rng.integers(0, 4)), int(rng.integers(-2, 3)))
                   for _ in range(3)]
            den = [(abs(rng.normal()) + 0.1, int(rng.integers(0, 2)), int(rng.integers(-2, 3)))
                   for _ in range(2)]
            pm = approximate_rational(num, den, p)
            assert pm.npieces <= 220  # bounded by the (K, L) term counts alone
            for d in np.geomspace(1e-3, 1e3, 50):
                eta = (sum(c * d ** (mu + nu / p) for c, mu, nu in num)
                       / sum(c * d ** (mu + nu / p) for c, mu, nu in den))
                r = pm(d) / eta
                worst = max(worst, r, 1 / r)
        assert worst <= 6.0

    def test_fit_basis_stability_band(self):
        # 10-fold changes of delta move the threshold by a bounded factor
        js = jet_space(2, 2)
        rng = np.random.default_rng(5)
        B = rng.normal(size=(js.D, js.D))
        q = B @ B.T + 0.05 * np.eye(js.D)
        pm = fit_basis_to_convex_body(q, [(1, 0), (0, 1)], js, 2.5)
        for d in np.geomspace(0.05, 5, 10):
            a, b = pm(d), pm(d * 10)
            if a > 0 and b > 0:
                assert 1e-4 <= b / a <= 1e4

    def test_fit_basis_empty_label(self):
        js = jet_space(1, 2)
        pm = fit_basis_to_convex_body(np.eye(1), [], js, 3.0)
        assert pm(1.0) == 0.0

    def test_threshold_tracks_eta_min(self):
        js = jet_space(2, 1)
        rng = np.random.default_rng(8)
        B = rng.normal(size=(js.D, js.D))
        q = B @ B.T + 0.01 * np.eye(js.D)
        A = [(1,)]
        pm = fit_basis_to_convex_body(q, A, js, 2.0)
        for d in np.geomspace(0.02, 50, 25):
            ref = eta_min_numeric(q, A, js, 2.0, d)
            if ref > 1e-13:
                r = pm(d) / ref
                assert 1 / 8 <= r <= 8
