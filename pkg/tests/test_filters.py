import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cjslice.filters import (
    FilterPlan,
    Window,
    WindowError,
    build_moments,
    chebyshev_coefficients,
    clenshaw,
    degree_heuristic,
    estimate_eigencount,
    jackson_factors,
    map_window,
    scalar_filter_eval,
)
from cjslice.linalg import SparseHermitian, SpectralBounds

from conftest import random_symmetric


def closed_form_row0(window, d):
    ta, tb = math.acos(window.a_m), math.acos(window.b_m)
    j = np.arange(1, d + 1)
    out = np.empty(d + 1)
    out[0] = 2 / math.pi * (ta - tb)
    out[1:] = 2 / (j * math.pi) * (np.sin(j * ta) - np.sin(j * tb))
    return out


def dense_filter_oracle(M, bounds, V, plan, k):
    """X f(Lambda) X^H V with f the damped series, from a full eigendecomposition."""
    lam, X = np.linalg.eigh(M)
    t = (2 * lam - bounds.lambda_max_est - bounds.lambda_min_est) / (
        bounds.lambda_max_est - bounds.lambda_min_est)
    f = scalar_filter_eval(plan, k, t)
    return X @ (f[:, None] * (X.conj().T @ V))


def unit_window(a, b):
    return map_window(SpectralBounds(-1.0, 1.0), a, b)


class TestMapWindow:
    def test_identity(self):
        w = map_window(SpectralBounds(-1, 1), -0.5, 0.5)
        assert (w.a_m, w.b_m) == (-0.5, 0.5)

    def test_affine(self):
        w = map_window(SpectralBounds(0, 4), 1, 3)
        assert (w.a_m, w.b_m) == (-0.5, 0.5)

    def test_outside(self):
        with pytest.raises(WindowError, match="re-estimate"):
            map_window(SpectralBounds(0, 4), -1, 3)

    def test_degenerate_bounds(self):
        with pytest.raises(WindowError):
            map_window(SpectralBounds(1, 1), 1, 1)

    def test_reversed(self):
        with pytest.raises(WindowError):
            map_window(SpectralBounds(0, 4), 3, 1)


class TestJackson:
    @pytest.mark.parametrize("d", [1, 2, 7, 100, 617])
    def test_first_is_one(self, d):
        assert jackson_factors(d)[0] == pytest.approx(1.0, abs=1e-15)

    def test_d2(self):
        assert jackson_factors(2)[1] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)

    @pytest.mark.parametrize("d", [3, 50, 617])
    def test_last(self, d):
        a = math.pi / (d + 2)
        assert jackson_factors(d)[d] == pytest.approx(2 * math.sin(a) ** 2 / (d + 2), rel=1e-12)

    def test_range(self):
        rho = jackson_factors(200)
        assert np.all(rho > 0) and np.all(rho <= 1 + 1e-15)
        assert np.all(np.diff(rho) <= 1e-15)


class TestCoefficients:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.95, 0.9), st.floats(0.01, 0.5), st.integers(10, 400))
    def test_closed_form(self, a, w, d):
        b = min(a + w, 0.99)
        win = unit_window(a, b)
        c = chebyshev_coefficients(win, 1, d)
        assert np.max(np.abs(c[0] - closed_form_row0(win, d))) <= 1e-12

    def test_full_window(self):
        c = chebyshev_coefficients(Window(-1, 1, -1.0, 1.0), 1, 20)
        assert c[0, 0] == pytest.approx(2.0, abs=1e-13)
        assert np.max(np.abs(c[0, 1:])) <= 1e-13

    def test_symmetric_window_odd_zero(self):
        c = chebyshev_coefficients(unit_window(-0.3, 0.3), 3, 40)
        assert np.max(np.abs(c[0, 1::2])) <= 1e-13

    def test_higher_moment_oracle(self):
        # independent check against scipy's adaptive quadrature in theta
        from scipy.integrate import quad

        win = unit_window(0.2, 0.35)
        c = chebyshev_coefficients(win, 3, 30)
        ta, tb = math.acos(win.a_m), math.acos(win.b_m)
        for k in range(3):
            for j in (0, 5, 29):
                def f(th):
                    s = (2 * math.cos(th) - win.a_m - win.b_m) / (win.b_m - win.a_m)
                    return math.cos(k * math.acos(max(-1.0, min(1.0, s)))) * math.cos(j * th)
                ref = 2 / math.pi * quad(f, tb, ta, epsabs=1e-15, epsrel=1e-14, limit=200)[0]
                assert c[k, j] == pytest.approx(ref, abs=1e-12)

    def test_degree_precondition(self):
        with pytest.raises(ValueError):
            chebyshev_coefficients(unit_window(0, 0.5), 5, 2)


class TestScalarFilter:
    def test_full_window_identity(self):
        plan = FilterPlan.build(Window(-1, 1, -1.0, 1.0), 1, 30)
        t = np.linspace(-1, 1, 101)
        np.testing.assert_allclose(scalar_filter_eval(plan, 0, t), 1.0, atol=1e-12)

    def test_center_and_tail(self):
        win = unit_window(-0.05, 0.05)
        d = degree_heuristic(win, 1, 1.0, 5.0)
        plan = FilterPlan.build(win, 1, d)
        assert 0.5 <= scalar_filter_eval(plan, 0, 0.0) <= 1.0
        far = np.array([-0.99, -0.7, 0.6, 0.99])
        assert np.all(np.abs(scalar_filter_eval(plan, 0, far)) <= 0.05)

    def test_clenshaw_matches_chebval(self):
        w = np.random.default_rng(0).standard_normal(25)
        t = np.linspace(-1, 1, 33)
        np.testing.assert_allclose(clenshaw(w, t), np.polynomial.chebyshev.chebval(t, w), atol=1e-13)

    def test_bad_index(self):
        plan = FilterPlan.build(unit_window(0, 0.5), 2, 10)
        with pytest.raises(IndexError):
            scalar_filter_eval(plan, 2, 0.0)

    @pytest.mark.parametrize("a,b", [(-0.5, -0.3), (0.0, 0.1), (0.6, 0.9)])
    def test_monotone_degree(self, a, b):
        win = unit_window(a, b)
        t = np.linspace(-1, 1, 4001)
        cut = (b - a) / 10
        mask = (np.abs(t - a) > cut) & (np.abs(t - b) > cut)
        h = ((t >= a) & (t <= b)).astype(float)
        errs = []
        d = 50
        for _ in range(4):
            plan = FilterPlan.build(win, 1, d)
            errs.append(np.max(np.abs(scalar_filter_eval(plan, 0, t[mask]) - h[mask])))
            d *= 2
        assert all(e2 <= e1 for e1, e2 in zip(errs, errs[1:]))


class TestDegreeHeuristic:
    def test_value(self):
        assert degree_heuristic(Window(0, 0.1, 0.0, 0.1), 8, 2.0, 5.0) == 617

    def test_m1(self):
        w = 0.2
        ref = math.ceil(math.pi**2 / w ** (4 / 3)) - 2
        assert degree_heuristic(Window(0, w, 0.0, w), 1, 1.0, 5.0) == ref

    def test_clamp(self):
        assert degree_heuristic(Window(0, 1.9, -0.95, 0.95), 1, 1.0, 10.0) == 3


class TestFilterPlan:
    def test_json_roundtrip(self):
        plan = FilterPlan.build(unit_window(0.1, 0.3), 3, 40)
        back = FilterPlan.from_json(plan.to_json())
        assert back.d == plan.d and back.M == plan.M and back.window == plan.window
        np.testing.assert_array_equal(back.coeff, plan.coeff)
        np.testing.assert_array_equal(back.rho, plan.rho)

    def test_rho0_exact(self):
        plan = FilterPlan.build(unit_window(0.1, 0.3), 2, 40)
        assert plan.rho[0] == pytest.approx(1.0, abs=1e-15)


class TestBuildMoments:
    def test_diagonal_scalar_oracle(self):
        diag = np.linspace(-0.9, 0.9, 12)
        A = SparseHermitian.from_matrix(sp.diags(diag))
        bounds = SpectralBounds(-1.0, 1.0)
        plan = FilterPlan.build(map_window(bounds, -0.2, 0.3), 2, 60)
        mb = build_moments(A, bounds, np.eye(12)[:, :6], plan)
        for i in range(6):
            expect = scalar_filter_eval(plan, 0, diag[i])
            col = mb.moment(0)[:, i]
            assert abs(col[i] - expect) <= 1e-12
            assert np.max(np.abs(np.delete(col, i))) <= 1e-12

    def test_full_window_identity(self):
        A = SparseHermitian.from_matrix(random_symmetric(20, 1) / 20)
        bounds = SpectralBounds(-1.0, 1.0)
        plan = FilterPlan.build(Window(-1, 1, -1.0, 1.0), 1, 30)
        V = np.random.default_rng(0).standard_normal((20, 3))
        mb = build_moments(A, bounds, V, plan)
        np.testing.assert_allclose(mb.S, V, atol=1e-12)

    def test_dense_oracle(self):
        M = random_symmetric(100, 3)
        A = SparseHermitian.from_matrix(M)
        ev = np.linalg.eigvalsh(M)
        bounds = SpectralBounds(ev[0] - 0.1, ev[-1] + 0.1)
        plan = FilterPlan.build(map_window(bounds, -1.0, 1.0), 3, 120)
        V = np.random.default_rng(1).standard_normal((100, 4))
        mb = build_moments(A, bounds, V, plan)
        for k in range(3):
            ref = dense_filter_oracle(M, bounds, V, plan, k)
            assert np.linalg.norm(mb.moment(k) - ref) <= 1e-10 * np.linalg.norm(ref)
        assert mb.matvecs == 120
        assert np.linalg.norm(mb.U @ mb.R - mb.S) <= 1e-12 * np.linalg.norm(mb.S)

    def test_complex_oracle(self):
        M = random_symmetric(40, 5, complex_=True)
        A = SparseHermitian.from_matrix(M)
        ev = np.linalg.eigvalsh(M)
        bounds = SpectralBounds(ev[0] - 0.1, ev[-1] + 0.1)
        plan = FilterPlan.build(map_window(bounds, -1.0, 2.0), 2, 80)
        V = np.random.default_rng(1).standard_normal((40, 3)) + 0j
        mb = build_moments(A, bounds, V, plan)
        ref = dense_filter_oracle(M, bounds, V, plan, 1)
        assert np.linalg.norm(mb.moment(1) - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_rank_warning_on_dependent_block(self):
        A = SparseHermitian.from_matrix(sp.identity(10))
        bounds = SpectralBounds(-2.0, 2.0)
        plan = FilterPlan.build(map_window(bounds, 0.5, 1.5), 2, 20)
        mb = build_moments(A, bounds, np.ones((10, 1)), plan)
        # on the identity every moment is a multiple of V
        assert mb.rank_warning

    def test_too_wide(self):
        A = SparseHermitian.from_matrix(np.eye(4))
        plan = FilterPlan.build(Window(-1, 1, -1.0, 1.0), 3, 10)
        with pytest.raises(ValueError):
            build_moments(A, SpectralBounds(-1, 1), np.ones((4, 2)), plan)


class TestEigencount:
    def test_diagonal(self):
        A = SparseHermitian.from_matrix(sp.diags(np.arange(11.0)))
        bounds = SpectralBounds(-0.5, 10.5)
        win = map_window(bounds, 3.5, 6.5)
        est = estimate_eigencount(A, bounds, win, 400, samples=200, seed=1)
        assert abs(est.count - 3) <= 1

    def test_full_window(self):
        A = SparseHermitian.from_matrix(random_symmetric(30, 2))
        bounds = SpectralBounds(-100, 100)
        est = estimate_eigencount(A, bounds, Window(-100, 100, -1.0, 1.0), 20, samples=10)
        assert est.count == 30
        assert est.mean == pytest.approx(30, abs=1e-9)

    def test_empty(self):
        A = SparseHermitian.from_matrix(sp.diags(np.arange(11.0)))
        bounds = SpectralBounds(-0.5, 10.5)
        est = estimate_eigencount(A, bounds, map_window(bounds, 4.2, 4.8), 800, samples=50)
        assert est.count == 0

    def test_samples_precondition(self):
        A = SparseHermitian.from_matrix(np.eye(3))
        with pytest.raises(ValueError):
            estimate_eigencount(A, SpectralBounds(0, 2), map_window(SpectralBounds(0, 2), 0.5, 1.5), 10, samples=5)
