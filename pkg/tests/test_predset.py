import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacshift.binom_stats import cp_upper
from pacshift.predset import (
    GridSpec,
    ScoreSet,
    empirical_error_count,
    evaluate,
    label_counts_at,
    ps_c_calibrate,
    ps_calibrate,
    u_cp,
)

from oracles import cp_upper_bisect

SCORES3 = [0.2, 0.5, 0.9]


class TestScoreSet:
    def test_sorted_with_back_permutation(self):
        s = ScoreSet([0.5, 0.1, 0.9, 0.1])
        assert s.m == 4
        np.testing.assert_array_equal(s.sorted_scores, [0.1, 0.1, 0.5, 0.9])
        np.testing.assert_array_equal(s.true_scores[s.order], s.sorted_scores)
        # stable: tied values keep their original order
        assert list(s.order[:2]) == [1, 3]

    @pytest.mark.parametrize("bad", [[], [0.1, float("nan")], [0.1, float("inf")], [-0.1]])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ScoreSet(bad)

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(step=0)
        with pytest.raises(ValueError):
            GridSpec(stop_factor=0.9)


class TestErrorCount:
    @pytest.mark.parametrize("tau,expected", [(0.0, 0), (0.5, 1), (1.0, 3)])
    def test_examples(self, tau, expected):
        assert empirical_error_count(SCORES3, tau) == expected

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 1.5), st.floats(0, 1.5))
    @settings(max_examples=100, deadline=None)
    def test_monotone_tradeoff(self, scores, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        assert empirical_error_count(scores, lo) <= empirical_error_count(scores, hi)
        labels = np.column_stack([scores, 1 - np.asarray(scores)])
        assert label_counts_at(labels, lo).mean() >= label_counts_at(labels, hi).mean()


class TestUCP:
    def test_no_errors(self):
        scores = np.linspace(0.1, 1.0, 10)
        assert u_cp(scores, 0.05, 0.05) == pytest.approx(0.258866, abs=1e-6)

    def test_all_errors(self):
        assert u_cp(SCORES3, 2.0, 0.05) == 1.0

    def test_bisection_oracle(self):
        scores = np.concatenate([np.full(5, 0.1), np.full(95, 0.8)])
        assert u_cp(scores, 0.5, 0.1) == pytest.approx(cp_upper_bisect(5, 100, 0.1), abs=1e-9)
        # frozen from the oracle
        assert u_cp(scores, 0.5, 0.1) == pytest.approx(0.09077146961408289, abs=1e-9)


class TestPS:
    def test_order_statistic_example(self):
        scores = np.round(np.arange(1, 11) / 10, 10)
        res = ps_calibrate(scores, 0.5, 0.05)
        assert res.feasible
        assert res.tau_hat == 0.2
        assert res.error_count == 1
        assert res.bound_at_tau <= 0.5

    def test_infeasible(self):
        res = ps_calibrate([0.1, 0.2, 0.3, 0.4, 0.5], 0.001, 0.001)
        assert not res.feasible
        assert res.tau_hat == 0.0

    def test_ties(self):
        res = ps_calibrate(np.full(50, 0.7), 0.2, 0.1)
        assert res.feasible
        assert res.tau_hat <= 0.7
        assert empirical_error_count(np.full(50, 0.7), res.tau_hat) == 0

    @pytest.mark.parametrize("bad", [(0.0, 0.1), (1.0, 0.1), (0.1, 0.0), (0.1, 1.5)])
    def test_invalid_levels(self, bad):
        with pytest.raises(ValueError):
            ps_calibrate(SCORES3, *bad)

    def test_feasible_results_satisfy_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            scores = rng.random(int(rng.integers(5, 300)))
            eps, delta = rng.uniform(0.02, 0.5), rng.uniform(0.01, 0.3)
            for grid in (None, GridSpec()):
                res = ps_calibrate(scores, eps, delta, grid)
                if res.feasible:
                    assert u_cp(scores, res.tau_hat, delta) <= eps
                    assert res.bound_at_tau == u_cp(scores, res.tau_hat, delta)

    def test_exact_and_grid_agree(self):
        rng = np.random.default_rng(5)
        grid = GridSpec()
        for _ in range(100):
            m = int(rng.integers(1, 501))
            scores = rng.random(m)
            if rng.random() < 0.3:
                scores = np.round(scores, 2)  # ties
            eps, delta = rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)
            exact = ps_calibrate(scores, eps, delta)
            gridded = ps_calibrate(scores, eps, delta, grid)
            assert exact.feasible == gridded.feasible
            assert abs(exact.tau_hat - gridded.tau_hat) <= grid.step
            assert exact.error_count == gridded.error_count

    def test_literal_grid_scan_matches(self):
        # brute-force ascending scan over a coarse grid, break on first violation
        rng = np.random.default_rng(9)
        grid = GridSpec(step=0.01)
        for _ in range(20):
            scores = rng.random(int(rng.integers(10, 80)))
            eps, delta = 0.2, 0.1
            best, t = 0.0, 0
            while True:
                tau = grid.point(t)
                if u_cp(scores, tau, delta) > eps:
                    break
                best, t = tau, t + 1
            assert ps_calibrate(scores, eps, delta, grid).tau_hat == pytest.approx(best, abs=1e-12)

    def test_trace(self):
        res = ps_calibrate(np.linspace(0.05, 1, 20), 0.3, 0.1, GridSpec(), keep_trace=True)
        assert res.trace
        bounds = [tp.bound for tp in res.trace]
        assert bounds == sorted(bounds)
        assert bounds[-1] > 0.3

    def test_pac_coverage(self):
        # uniform scores: the true error of C_tau is tau itself
        rng = np.random.default_rng(2024)
        trials, m, eps, delta = 2000, 500, 0.1, 0.1
        violations = sum(ps_calibrate(rng.random(m), eps, delta).tau_hat > eps for _ in range(trials))
        assert violations / trials <= delta + 3 * math.sqrt(delta * (1 - delta) / trials)


class TestPSC:
    def test_b_one_is_ps(self):
        scores = np.random.default_rng(0).random(200)
        assert ps_c_calibrate(scores, 0.1, 0.1, 1.0).core() == ps_calibrate(scores, 0.1, 0.1).core()

    def test_scaled_epsilon(self):
        scores = np.random.default_rng(1).random(2000)
        assert ps_c_calibrate(scores, 0.1, 0.1, 10).core() == ps_calibrate(scores, 0.01, 0.1).core()

    def test_collapse(self):
        res = ps_c_calibrate(np.random.default_rng(2).random(50), 0.1, 0.1, 1000)
        assert not res.feasible and res.tau_hat == 0.0

    def test_invalid_b(self):
        with pytest.raises(ValueError):
            ps_c_calibrate(SCORES3, 0.1, 0.1, 0.5)

    def test_never_above_ps(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            scores = rng.random(300)
            b = rng.uniform(1, 10)
            assert ps_c_calibrate(scores, 0.2, 0.1, b).tau_hat <= ps_calibrate(scores, 0.2, 0.1).tau_hat


class TestEvaluate:
    def test_tau_zero(self):
        err, size = evaluate(SCORES3, label_counts_at(np.full((3, 4), 0.3), 0.0), 0.0)
        assert (err, size) == (0.0, 4.0)

    def test_tau_above_all(self):
        labels = np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
        assert evaluate(SCORES3, label_counts_at(labels, 2.0), 2.0) == (1.0, 0.0)

    def test_mixed(self):
        labels = np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
        # at 0.5: sets {1}, {0,1}, {0} -> sizes 1,2,1; only score 0.2 is missed
        err, size = evaluate(SCORES3, label_counts_at(labels, 0.5), 0.5)
        assert err == pytest.approx(1 / 3)
        assert size == pytest.approx(4 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(SCORES3, [1, 2], 0.5)


def test_cp_upper_is_used_unchanged():
    scores = np.linspace(0.01, 1, 100)
    res = ps_calibrate(scores, 0.1, 0.05)
    assert res.bound_at_tau == cp_upper(res.error_count, 100, 0.05)
