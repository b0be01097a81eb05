"""
Unit Tests for walk expectations and conditioned walk samplers
"""
import math

import numpy as np
import pytest

from config import settings
from errors import ConditioningTimeout
from models import ConditioningMode, EstimatorMethod, RenewalSide
from oracle.enumeration import exact_prob_min_nonneg, exact_walk_functional
from randwalk.conditioned import prob_min_nonneg, sample_conditioned, tilted_walk_expectation, walk_expectation
from randwalk.renewal import RenewalMethod, build_renewal_table
from randwalk.walk import ExpFirstMin, first_min_at_end, max_neg, min_nonneg
from tilting.tilt import tilted_env


class TestWalkExpectations:
    """Plain and tilted Monte Carlo against enumeration"""

    def test_prob_min_nonneg(self, reference_env, reference_solution):
        """P{L_n >= 0} on tilted paths within 4 sigma of the exact sum"""
        tilted = tilted_env(reference_env, reference_solution)
        for n in (3, 8):
            exact = exact_prob_min_nonneg(reference_env, n).value
            estimate = prob_min_nonneg(tilted, reference_solution, n, 40000, 21)
            assert estimate.method == EstimatorMethod.tilted_is
            assert abs(estimate.value - exact) <= 4.0 * estimate.stderr, f"n={n}: {estimate.value} vs {exact}"

    def test_prob_min_nonneg_at_zero(self, pm1_tilted, pm1_solution):
        assert prob_min_nonneg(pm1_tilted, pm1_solution, 0, 10, 1).value == 1.0

    def test_plain_and_tilted_agree(self, pm1_env, pm1_solution, pm1_tilted):
        """E[e^{S_n}; tau_n = n] by both measures"""
        functional = ExpFirstMin(1.0)
        exact = exact_walk_functional(pm1_env, 7, functional).value
        plain = walk_expectation(pm1_env, 7, functional, 40000, 2)
        tilted = tilted_walk_expectation(pm1_tilted, pm1_solution, 7, functional, 40000, 3)
        assert abs(plain.value - exact) <= 4.0 * plain.stderr
        assert abs(tilted.value - exact) <= 4.0 * tilted.stderr
        assert tilted.details["log_scale"] == pytest.approx(7 * pm1_solution.log_gamma)


class TestRejection:
    """Exact conditioned sampler"""

    @pytest.mark.parametrize("mode,event", [
        (ConditioningMode.stay_nonneg, min_nonneg),
        (ConditioningMode.stay_neg, max_neg),
        (ConditioningMode.first_min_at_n, first_min_at_end),
    ])
    def test_paths_satisfy_event(self, pm1_tilted, mode, event):
        sample = sample_conditioned(pm1_tilted, mode, 10, 2000, 4)
        assert sample.size == 2000
        assert event(sample.sums).all()
        assert np.all(sample.weights == 1.0)

    def test_acceptance_rate(self, pm1_tilted):
        """Simple random walk: P{L_10 >= 0} = C(10,5)/2^10"""
        sample = sample_conditioned(pm1_tilted, ConditioningMode.stay_nonneg, 10, 20000, 8)
        expected = math.comb(10, 5) / 2 ** 10
        assert sample.acceptance_rate == pytest.approx(expected, abs=0.01)

    def test_bad_n(self, pm1_tilted):
        with pytest.raises(ValueError):
            sample_conditioned(pm1_tilted, ConditioningMode.stay_neg, 0, 10, 1)
        with pytest.raises(ValueError):
            sample_conditioned(pm1_tilted, ConditioningMode.stay_neg, settings.MAX_CONDITIONED_N + 1, 10, 1)

    def test_timeout(self, pm1_tilted, monkeypatch):
        """Acceptance below the floor gives up"""
        monkeypatch.setattr(settings, "MIN_ACCEPTANCE_RATE", 0.5)
        with pytest.raises(ConditioningTimeout):
            sample_conditioned(pm1_tilted, ConditioningMode.stay_nonneg, 10, 200000, 9)


class TestHTransform:
    """Doob-transform sampler with self-normalized weights"""

    @pytest.fixture(scope="class")
    def u_table(self, pm1_tilted):
        return build_renewal_table(pm1_tilted, RenewalSide.u, 16.0, 20000, 5, method=RenewalMethod.ladder, time_cap=4096)

    def test_weights_are_inverse_u(self, pm1_tilted, u_table):
        """u is harmonic, so each weight is u(0)/u(S_n)"""
        sample = sample_conditioned(pm1_tilted, ConditioningMode.stay_nonneg, 10, 5000, 12, method="h-transform", table=u_table)
        assert sample.approximate
        assert min_nonneg(sample.sums).all()
        end = sample.endpoints()
        ratio = sample.weights * (end + 1.0)
        assert np.allclose(ratio, ratio[0]), "weights not proportional to 1/u(S_n)"

    def test_weighted_mean_matches_enumeration(self, pm1_tilted, u_table):
        """E[S_n | L_n >= 0] from the weighted sample"""
        n = 10
        top = exact_walk_functional(pm1_tilted, n, lambda s: s[:, -1] * min_nonneg(s)).value
        bottom = exact_walk_functional(pm1_tilted, n, lambda s: min_nonneg(s).astype(float)).value
        sample = sample_conditioned(pm1_tilted, ConditioningMode.stay_nonneg, n, 20000, 13, method="h-transform", table=u_table)
        assert sample.weighted_mean(sample.endpoints()) == pytest.approx(top / bottom, abs=0.15)

    def test_table_side_checked(self, pm1_tilted, u_table):
        with pytest.raises(ValueError):
            sample_conditioned(pm1_tilted, ConditioningMode.stay_neg, 5, 10, 1, method="h-transform", table=u_table)
        with pytest.raises(ValueError):
            sample_conditioned(pm1_tilted, ConditioningMode.stay_nonneg, 5, 10, 1, method="h-transform")
