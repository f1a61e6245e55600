import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rrnit import (DenseOperator, MultiplierError, RangeTarget, SolverConfig, g_value,
                   hilbert_operator, initial_guess, lambda_lower_bound, make_hilbert_problem,
                   operator_norm_estimate, run_rrnit, solve_range)

from conftest import random_dense_problem, scalar_op

TOGGLES = list(itertools.product([False, True], repeat=3))


def feasible_case(seed, m=10, n=6):
    """Random problem with delta strictly above the least-squares residual."""
    rng = np.random.default_rng(seed)
    A, x, y = random_dense_problem(rng, m, n)
    r = np.linalg.norm(A(x) - y)
    x_ls = np.linalg.lstsq(A.matrix, y, rcond=None)[0]
    r_min = np.linalg.norm(A(x_ls) - y)
    delta = r_min + (r - r_min) * rng.uniform(0.05, 0.6)
    p = rng.uniform(0.01, 0.9)
    return A, x, y, RangeTarget.from_residual(r, delta, p)


class TestRangeTarget:
    def test_theta(self):
        t = RangeTarget.from_residual(1.0, 0.1, 0.5)
        assert t.theta == pytest.approx(0.55)
        assert t.contains(0.1) and t.contains(0.5499) and t.contains(0.3)
        assert not t.contains(0.09) and not t.contains(0.56)
        assert t.too_large(0.6) and not t.too_large(0.05)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 2.0])
    def test_bad_p(self, p):
        with pytest.raises(ValueError):
            RangeTarget.from_residual(1.0, 0.1, p)

    @settings(max_examples=200, deadline=None)
    @given(prev=st.floats(1e-12, 1e6), frac=st.floats(0, 1), p=st.floats(0.001, 0.999),
           t=st.floats(0, 1))
    def test_contains_implies_decay(self, prev, frac, p, t):
        delta = frac * prev
        target = RangeTarget.from_residual(prev, delta, p)
        r = delta + t * (target.theta - delta)
        if target.contains(r):
            assert r - delta <= p * (prev - delta)
            assert delta <= r


class TestLowerBound:
    def test_identity(self, rng):
        x, y = rng.standard_normal(5), rng.standard_normal(5)
        r = np.linalg.norm(x - y)
        b = lambda_lower_bound(DenseOperator(np.eye(5)), x, y, 0.3 * r)
        assert b == pytest.approx((r - 0.3 * r) / r, rel=1e-14)

    def test_scalar(self):
        assert lambda_lower_bound(scalar_op(2.0), np.zeros(1), np.ones(1), 0.5) == pytest.approx(0.125)

    def test_errors(self):
        with pytest.raises(ValueError):
            lambda_lower_bound(scalar_op(2.0), np.zeros(1), np.ones(1), 1.0)
        # A*(A x - y) = 0 but residual positive: y outside the range of A
        A = DenseOperator([[1.0], [0.0]])
        with pytest.raises(ValueError):
            lambda_lower_bound(A, np.ones(1), np.array([1.0, 1.0]), 0.5)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), p=st.floats(0.01, 0.99), shrink=st.floats(0, 1))
    def test_exact_data_specialization(self, seed, p, shrink):
        rng = np.random.default_rng(seed)
        A, x, _ = random_dense_problem(rng, 7, 7)
        y = A(rng.standard_normal(7))
        r = np.linalg.norm(A(x) - y)
        norm = np.linalg.svd(A.matrix, compute_uv=False)[0]
        bound = lambda_lower_bound(A, x, y, shrink * p * r)
        assert bound >= (1 - p) / norm ** 2 * (1 - 1e-12)

    def test_is_a_lower_bound(self):
        # any lam reaching residual mu is at least the bound
        for seed in range(20):
            A, x, y, t = feasible_case(seed)
            res = solve_range(A, x, y, t)
            assert res.lam >= lambda_lower_bound(A, x, y, res.accepted_residual)


class TestInitialGuess:
    def setup_method(self):
        self.args = (hilbert_operator(3), np.zeros(3), np.ones(3), 0.1)

    def test_k1_is_bound_at_theta(self):
        op, x, y, theta = self.args
        assert initial_guess(1, [], *self.args) == lambda_lower_bound(op, x, y, theta)

    def test_k2(self):
        assert initial_guess(2, [0.7], *self.args) == 0.7

    def test_k3_extrapolates(self):
        assert initial_guess(3, [1.0, 10.0], *self.args) == pytest.approx(100.0)

    def test_constant_fixed_point(self):
        assert initial_guess(5, [2.0, 5.0, 3.5, 3.5], *self.args) == 3.5

    def test_previous_mode(self):
        assert initial_guess(3, [1.0, 10.0], *self.args, mode="previous") == 10.0

    def test_errors(self):
        with pytest.raises(ValueError):
            initial_guess(0, [], *self.args)
        with pytest.raises(ValueError):
            initial_guess(3, [], *self.args)
        with pytest.raises(ValueError):
            initial_guess(3, [1.0, 2.0], *self.args, mode="cubic")


class TestSolveRange:
    def test_immediate_acceptance(self):
        A, x, y, t = feasible_case(3)
        first = solve_range(A, x, y, t)
        res = solve_range(A, x, y, t, k=2, history=[first.lam])
        assert res.inner_iterations == 0
        assert res.linear_solves == 1
        assert res.lam == first.lam == res.initial_lam

    @pytest.mark.parametrize("m1,m2,m3", TOGGLES)
    def test_scalar_interval(self, m1, m2, m3):
        t = RangeTarget.from_residual(1.0, 0.1, 0.5)
        res = solve_range(scalar_op(1.0), np.zeros(1), np.ones(1), t, m1=m1, m2=m2, m3=m3)
        assert 1 / 0.55 - 1 - 1e-12 <= res.lam <= 9 + 1e-12
        assert 0.1 <= res.accepted_residual <= 0.55
        assert res.accepted_residual == pytest.approx(1 / (1 + res.lam), rel=1e-12)

    @pytest.mark.parametrize("m1,m2,m3", TOGGLES)
    def test_all_toggles_feasible(self, m1, m2, m3):
        for seed in range(30):
            A, x, y, t = feasible_case(seed)
            hist = [0.5, 2.0]
            res = solve_range(A, x, y, t, k=3, history=hist, m1=m1, m2=m2, m3=m3)
            assert t.contains(res.accepted_residual)
            assert min(g for _, g in res.trials[-1:]) >= t.delta ** 2

    def test_overshoot_recovery(self):
        overshoots = 0
        for seed in range(60):
            A, x, y, t = feasible_case(seed)
            res = solve_range(A, x, y, t)
            if min(g for _, g in res.trials) < t.delta ** 2:
                overshoots += 1
            assert res.accepted_residual ** 2 >= t.delta ** 2
            assert t.contains(res.accepted_residual)
        assert overshoots > 0

    def test_cost_accounting(self):
        for seed in range(40):
            A, x, y, t = feasible_case(seed)
            for m1, m2, m3 in TOGGLES:
                res = solve_range(A, x, y, t, m1=m1, m2=m2, m3=m3)
                newton = len(res.omega_history) - 1
                bisect = res.inner_iterations - newton
                assert bisect >= 0
                assert res.linear_solves == 1 + 2 * newton + bisect
                assert len(res.trials) == res.inner_iterations + 1

    def test_omega_schedule(self):
        for seed in range(40):
            A, x, y, t = feasible_case(seed)
            off = solve_range(A, x, y, t, m2=False)
            assert set(off.omega_history) == {1.0}
            on = solve_range(A, x, y, t, m2=True)
            for a, b in zip(on.omega_history, on.omega_history[1:]):
                assert b == 1.0 or b == 2 * a

    def test_m1_off_uses_delta_target(self):
        # without M1 the first Newton step aims at G = delta^2, so it is shorter
        A, x, y, t = feasible_case(5)
        a = solve_range(A, x, y, t, m1=True, m2=False, m3=False)
        b = solve_range(A, x, y, t, m1=False, m2=False, m3=False)
        if len(a.trials) > 1 and len(b.trials) > 1:
            assert b.trials[1][0] <= a.trials[1][0]

    def test_inner_cap(self):
        A, x, y, t = feasible_case(1)
        start = solve_range(A, x, y, t)
        if start.inner_iterations == 0:
            pytest.skip("accepted without inner iterations")
        with pytest.raises(MultiplierError) as info:
            solve_range(A, x, y, t, max_inner=0, max_bisect=0)
        assert len(info.value.trials) >= 1

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_feasible_set_is_interval(self, seed):
        A, x, y, t = feasible_case(seed)
        res = solve_range(A, x, y, t, method="direct")
        lams = res.lam * np.logspace(-3, 3, 121)
        inside = [t.contains(g_value(A, x, y, lam, method="direct").residual) for lam in lams]
        idx = [i for i, v in enumerate(inside) if v]
        assert idx == list(range(idx[0], idx[-1] + 1))
        assert inside[60]

    def test_interior_perturbation(self):
        checked = 0
        for seed in range(40):
            A, x, y, t = feasible_case(seed)
            res = solve_range(A, x, y, t, method="direct")
            mid = 0.5 * (t.delta + t.theta)
            half = 0.5 * (t.theta - t.delta)
            if abs(res.accepted_residual - mid) > 0.5 * half:
                continue
            for f in (0.99, 1.01):
                g = g_value(A, x, y, res.lam * f, method="direct").residual_sq
                assert t.delta ** 2 <= g <= t.theta ** 2
            checked += 1
        assert checked > 0

    def test_hilbert_run_ranges(self):
        pr = make_hilbert_problem(25, relative_level=1e-5, seed=0)
        cfg = SolverConfig(p=0.2, tau=2)
        tr = run_rrnit(pr, cfg)
        res = tr.residuals
        for k in range(1, len(res)):
            theta = 0.2 * res[k - 1] + 0.8 * pr.delta
            assert pr.delta <= res[k] <= theta
