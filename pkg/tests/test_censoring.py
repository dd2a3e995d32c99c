import numpy as np
import pytest

from fgray.censoring import build_risk_grid, km_censoring, StepSurvival
from fgray.data import CompetingRisksData
from fgray.errors import NumericError

from oracles import km_product_limit, random_dataset, step_eval, weight_matrix


class TestStepSurvival:
    def test_right_continuous_evaluation(self):
        s = StepSurvival(jump_times=[1.0, 2.0], values=[0.5, 0.25])
        np.testing.assert_allclose(
            s(np.array([0.0, 0.999, 1.0, 1.5, 2.0, 10.0])),
            [1.0, 1.0, 0.5, 0.5, 0.25, 0.25],
        )

    def test_scalar_evaluation(self):
        s = StepSurvival(jump_times=[1.0], values=[0.4])
        assert s(0.5) == 1.0
        assert s(1.0) == 0.4


class TestKmCensoring:
    def test_no_censoring_constant_one(self):
        d = CompetingRisksData(
            times=[1, 2, 3], status=[1, 2, 1], covariates=np.zeros((3, 1))
        )
        g = km_censoring(d)
        assert g(np.array([0.0, 5.0])).tolist() == [1.0, 1.0]

    def test_hand_worked_curve(self):
        # censorings at 2 (3 at risk) and 4 (1 at risk)
        d = CompetingRisksData(
            times=[1, 2, 3, 4], status=[1, 0, 1, 0], covariates=np.zeros((4, 1))
        )
        g = km_censoring(d)
        np.testing.assert_allclose(g(np.array([0.0, 1.9])), [1.0, 1.0])
        np.testing.assert_allclose(g(np.array([2.0, 3.9])), [2 / 3, 2 / 3])
        np.testing.assert_allclose(g(np.array([4.0, 9.0])), [0.0, 0.0])

    def test_matches_brute_force_exactly(self, rng):
        for _ in range(100):
            d = random_dataset(rng, n=int(rng.integers(2, 51)), p=1)
            g = km_censoring(d)
            jumps, values = km_product_limit(d.times, d.status)
            assert np.array_equal(g.jump_times, jumps)
            assert np.array_equal(g.values, values)   # bit-equal

    def test_tied_event_and_censoring_share_risk_set(self):
        # the subject failing at t stays in the censoring risk set at t
        d = CompetingRisksData(
            times=[2.0, 2.0, 3.0], status=[1, 0, 1], covariates=np.zeros((3, 1))
        )
        g = km_censoring(d)
        np.testing.assert_allclose(g(2.0), 1 - 1 / 3)


class TestRiskGrid:
    def test_weight_one_before_own_time(self):
        d = CompetingRisksData(
            times=[1, 2, 3, 4], status=[1, 0, 1, 2], covariates=np.zeros((4, 1))
        )
        grid = build_risk_grid(d, km_censoring(d))
        # every subject has weight one at event times up to its own time
        for i in range(4):
            for k, t in enumerate(grid.event_times):
                if t <= d.times[i]:
                    assert grid.weights[i, k] == 1.0

    def test_censored_zero_after_own_time(self):
        d = CompetingRisksData(
            times=[1, 2, 3], status=[0, 1, 1], covariates=np.zeros((3, 1))
        )
        grid = build_risk_grid(d, km_censoring(d))
        k_after = grid.event_times > 1.0
        assert np.all(grid.weights[0, k_after] == 0.0)
        assert np.all(grid.at_risk_flags[0, k_after] == 0)

    def test_cause2_ratio_weight_hand_worked(self):
        # survival curve with G = 1 on [0,2), 2/3 on [2,4), 0 on [4,inf);
        # a competing-event subject at X = 2 keeps weight G(t)/G(2)
        g = StepSurvival(jump_times=[2.0, 4.0], values=[2 / 3, 0.0])
        d = CompetingRisksData(
            times=[3.0, 2.0, 4.5],
            status=[1, 2, 1],
            covariates=np.zeros((3, 1)),
        )
        grid = build_risk_grid(d, g)
        i = 1   # the cause-2 subject with X = 2
        k3 = grid.event_times.tolist().index(3.0)
        k45 = grid.event_times.tolist().index(4.5)
        np.testing.assert_allclose(grid.weights[i, k3], (2 / 3) / (2 / 3))
        np.testing.assert_allclose(grid.weights[i, k45], 0.0 / (2 / 3))

    def test_matches_naive_three_case_rule(self, rng):
        for _ in range(25):
            d = random_dataset(rng, n=int(rng.integers(5, 40)), p=1)
            grid = build_risk_grid(d, km_censoring(d))
            event_times, W = weight_matrix(d)
            assert np.array_equal(grid.event_times, event_times)
            np.testing.assert_allclose(grid.weights, W, atol=1e-14)

    def test_self_inclusion_invariant(self, rng):
        for _ in range(25):
            d = random_dataset(rng, n=int(rng.integers(5, 40)), p=1)
            grid = build_risk_grid(d, km_censoring(d))
            assert np.all(grid.weights.sum(axis=0) >= 1.0 - 1e-12)

    def test_weights_in_unit_interval_and_monotone_for_cause2(self, rng):
        for _ in range(25):
            d = random_dataset(rng, n=30, p=1)
            grid = build_risk_grid(d, km_censoring(d))
            assert np.all(grid.weights >= 0) and np.all(grid.weights <= 1 + 1e-15)
            for i in np.flatnonzero(d.status == 2):
                w = grid.weights[i]
                after = grid.event_times > d.times[i]
                assert np.all(np.diff(w[after]) <= 1e-15)

    def test_pi_hat_non_increasing(self, rng):
        for _ in range(10):
            d = random_dataset(rng, n=30, p=1)
            grid = build_risk_grid(d, km_censoring(d))
            assert np.all(np.diff(grid.pi_hat) <= 0)

    def test_degenerate_weight_raises(self):
        # impossible with a self-consistent product-limit curve (if it
        # hits zero nothing is observed beyond that point), so exercise
        # the defensive error with a curve that vanishes too early
        d = CompetingRisksData(
            times=[1.0, 2.0, 3.0], status=[1, 2, 1], covariates=np.zeros((3, 1))
        )
        dead = StepSurvival(jump_times=[1.5], values=[0.0])
        with pytest.raises(NumericError, match="horizon"):
            build_risk_grid(d, dead)
