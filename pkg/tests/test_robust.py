import itertools

import numpy as np
import pytest

from pacshift.predset import GridSpec, ps_calibrate
from pacshift.rejection import RejectionInput, draw_uniforms, ps_r_calibrate, u_rscp
from pacshift.robust import (
    IWInterval,
    UnboundedWeightError,
    UncertaintySet,
    greedy_worst_case,
    ps_w_calibrate,
    robust_u_rscp,
)

SCORES3 = np.array([0.2, 0.5, 0.9])


def _bound(scores, w, b, v, tau, delta):
    return u_rscp(RejectionInput(scores, w, b, v), tau, delta)


def _random_instance(rng, m, b=4.0):
    scores = np.round(rng.random(m), 2)
    lo = rng.uniform(0, b, m)
    hi = np.minimum(lo + rng.uniform(0, 2, m), b)
    v = rng.random(m)
    tau = float(rng.choice(np.concatenate([scores, [0.0, 1.1]])))
    delta = float(rng.choice([0.05, 0.1, 0.3]))
    return scores, UncertaintySet(lo, hi), v, tau, delta


class TestIntervals:
    def test_interval_validation(self):
        IWInterval(0.0, float("inf"))
        with pytest.raises(ValueError):
            IWInterval(2.0, 1.0)
        with pytest.raises(ValueError):
            IWInterval(-1.0, 1.0)

    def test_set_validation(self):
        with pytest.raises(ValueError):
            UncertaintySet([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            UncertaintySet([1.0], [0.5])
        with pytest.raises(ValueError):
            UncertaintySet([1.0], [2.0], delta_w=0.0)

    def test_round_trip_and_contains(self):
        W = UncertaintySet.from_intervals([IWInterval(1, 2), IWInterval(0, 3)])
        assert W.intervals == [IWInterval(1, 2), IWInterval(0, 3)]
        assert W.contains([1.5, 0.0]) and not W.contains([2.5, 1.0])


class TestGreedy:
    W3 = UncertaintySet([1, 1, 1], [2, 2, 2])

    def test_no_errors(self):
        np.testing.assert_array_equal(greedy_worst_case(SCORES3, 0.0, self.W3), [1, 1, 1])

    def test_all_errors(self):
        np.testing.assert_array_equal(greedy_worst_case(SCORES3, 1.0, self.W3), [2, 2, 2])

    def test_mixed(self):
        np.testing.assert_array_equal(greedy_worst_case(SCORES3, 0.4, self.W3), [2, 1, 1])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            greedy_worst_case(SCORES3, 0.4, UncertaintySet([1], [2]))


class TestRobustBound:
    def test_degenerate_equals_u_rscp(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = int(rng.integers(1, 30))
            scores, w, v = rng.random(m), rng.uniform(0, 3, m), rng.random(m)
            tau = float(rng.random())
            W = UncertaintySet.degenerate(w)
            assert robust_u_rscp(scores, tau, W, 3.0, v, 0.1) == _bound(scores, w, 3.0, v, tau, 0.1)

    def test_three_point_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            scores, W, v, tau, delta = _random_instance(rng, 6)
            grid = [(lo, (lo + hi) / 2, hi) for lo, hi in zip(W.lower, W.upper)]
            brute = max(_bound(scores, np.array(w), 4.0, v, tau, delta) for w in itertools.product(*grid))
            assert robust_u_rscp(scores, tau, W, 4.0, v, delta) == brute

    def test_corner_and_discretized_optimality(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            m = int(rng.integers(1, 9))
            scores, W, v, tau, delta = _random_instance(rng, m)
            greedy = robust_u_rscp(scores, tau, W, 4.0, v, delta)
            corners = max(
                _bound(scores, np.array(w), 4.0, v, tau, delta) for w in itertools.product(*zip(W.lower, W.upper))
            )
            assert greedy == corners

    def test_nested_dominance(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            m = int(rng.integers(1, 20))
            scores, W, v, tau, delta = _random_instance(rng, m)
            shrink = rng.random(m)
            mid_lo = W.lower + shrink * (W.upper - W.lower) * rng.random(m)
            mid_hi = mid_lo + (W.upper - mid_lo) * rng.random(m)
            inner = UncertaintySet(mid_lo, mid_hi)
            assert robust_u_rscp(scores, tau, W, 4.0, v, delta) >= robust_u_rscp(
                scores, tau, inner, 4.0, v, delta
            )


class TestWeightMonotonicity:
    """Along coordinate i the bound rises with w_i on errors and falls on covered examples."""

    def _path(self, rng):
        m = int(rng.integers(1, 21))
        b = 4.0
        scores = np.round(rng.random(m), 2)
        w = rng.uniform(0, b, m)
        v = rng.random(m)
        tau = float(rng.random())
        i = int(rng.integers(m))
        delta = float(rng.choice([0.05, 0.1, 0.3]))
        # values on both sides of the acceptance cut V_i * b
        cut = v[i] * b
        values = np.unique(np.concatenate([np.linspace(0, b, 9), [cut, max(cut - 1e-9, 0), min(cut + 1e-9, b)]]))
        bounds = []
        for x in values:
            w2 = w.copy()
            w2[i] = x
            bounds.append(_bound(scores, w2, b, v, tau, delta))
        return scores[i] < tau, np.diff(bounds)

    def test_both_directions(self):
        rng = np.random.default_rng(4)
        seen = {True: 0, False: 0}
        for _ in range(1000):
            is_error, steps = self._path(rng)
            seen[is_error] += 1
            if is_error:
                assert np.all(steps >= 0)
            else:
                assert np.all(steps <= 0)
        assert min(seen.values()) > 100


class TestPSW:
    def test_infinite_upper(self):
        W = UncertaintySet([1, 1, 1], [2, np.inf, 2])
        with pytest.raises(UnboundedWeightError):
            ps_w_calibrate(SCORES3, W, 5.0, 0.1, 0.05, seed=0)

    def test_infinite_b(self):
        with pytest.raises(UnboundedWeightError):
            ps_w_calibrate(SCORES3, UncertaintySet([1, 1, 1], [2, 2, 2]), np.inf, 0.1, 0.05, seed=0)

    @pytest.mark.parametrize("grid", [None, GridSpec()])
    def test_degenerate_equals_ps_r(self, grid):
        rng = np.random.default_rng(5)
        for _ in range(30):
            m = int(rng.integers(20, 400))
            scores, w = rng.random(m), rng.uniform(0, 5, m)
            seed = int(rng.integers(1 << 30))
            r = ps_r_calibrate(scores, w, 5.0, 0.15, 0.1, seed=seed, grid=grid)
            pw = ps_w_calibrate(scores, UncertaintySet.degenerate(w), 5.0, 0.15, 0.1, grid=grid, seed=seed)
            assert pw.core() == r.core()

    def test_weights_at_bound_equal_ps(self):
        scores = np.random.default_rng(6).random(250)
        W = UncertaintySet.degenerate(np.full(250, 3.0))
        for grid in (None, GridSpec()):
            pw = ps_w_calibrate(scores, W, 3.0, 0.1, 0.05, grid=grid, seed=1)
            assert pw.core() == ps_calibrate(scores, 0.1, 0.05, grid).core()

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        scores, lo = rng.random(200), rng.uniform(0, 2, 200)
        W = UncertaintySet(lo, lo + 1)
        a = ps_w_calibrate(scores, W, 3.0, 0.2, 0.05, seed=3)
        b = ps_w_calibrate(scores, W, 3.0, 0.2, 0.05, seed=3)
        assert a == b and a.to_dict() == b.to_dict()

    def test_matches_literal_scan(self):
        # ascending scan over a coarse grid, recomputing the worst case at every tau
        rng = np.random.default_rng(8)
        grid = GridSpec(step=0.005)
        for _ in range(20):
            m = int(rng.integers(30, 150))
            scores, lo = rng.random(m), rng.uniform(0, 2, m)
            W = UncertaintySet(lo, lo + rng.uniform(0, 1, m))
            v = draw_uniforms(m, 17)
            best, t = 0.0, 0
            while True:
                tau = grid.point(t)
                if robust_u_rscp(scores, tau, W, 3.0, v, 0.1) > 0.2:
                    break
                best, t = tau, t + 1
            res = ps_w_calibrate(scores, W, 3.0, 0.2, 0.1, grid, uniforms=v)
            assert res.tau_hat == pytest.approx(best, abs=1e-12)
            if res.feasible:
                assert res.bound_at_tau == robust_u_rscp(scores, res.tau_hat, W, 3.0, v, 0.1)

    def test_scan_mode_never_below_break_mode(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            m = int(rng.integers(30, 300))
            scores, lo = rng.random(m), rng.uniform(0, 2, m)
            W = UncertaintySet(lo, lo + rng.uniform(0, 2, m))
            brk = ps_w_calibrate(scores, W, 4.0, 0.2, 0.1, seed=m, keep_trace=True)
            scan = ps_w_calibrate(scores, W, 4.0, 0.2, 0.1, seed=m, break_on_violation=False, keep_trace=True)
            assert scan.tau_hat >= brk.tau_hat
            assert len(scan.trace) >= len(brk.trace)

    def test_wider_intervals_are_more_conservative(self):
        rng = np.random.default_rng(10)
        scores, w = rng.random(500), rng.uniform(0.5, 2.5, 500)
        point = ps_w_calibrate(scores, UncertaintySet.degenerate(w), 4.0, 0.1, 0.05, seed=2)
        wide = ps_w_calibrate(scores, UncertaintySet(w * 0.5, np.minimum(w * 1.5, 4.0)), 4.0, 0.1, 0.05, seed=2)
        assert wide.tau_hat <= point.tau_hat
