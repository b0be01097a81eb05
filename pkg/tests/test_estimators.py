"""
Unit Tests for the annealed survival estimators and the conditioned
population sampler, against the exact oracle
"""
import numpy as np
import pytest

from branching.estimators import conditioned_population, estimate_survival
from models import EstimatorMethod
from montecarlo.stats import tv_distance
from oracle.enumeration import exact_conditional_pmf, exact_survival, pmf_from_result
from tilting.tilt import solve_beta


class TestEstimateSurvival:
    """All three estimators agree with enumeration"""

    @pytest.mark.parametrize("method", [
        EstimatorMethod.naive,
        EstimatorMethod.quenched_cond,
        EstimatorMethod.tilted_is,
    ])
    def test_against_exact(self, reference_env, reference_solution, method):
        n = 6
        exact = exact_survival(reference_env, n).value
        estimate = estimate_survival(reference_env, reference_solution, n, 40000, method, seed=31)
        assert estimate.method == method
        assert abs(estimate.value - exact) <= 4.0 * estimate.stderr, \
            f"{method.value}: {estimate.value} +- {estimate.stderr} vs {exact}"

    def test_binary_env(self, binary_env):
        """Non-geometric laws go through the same calculus"""
        solution = solve_beta(binary_env)
        exact = exact_survival(binary_env, 8).value
        estimate = estimate_survival(binary_env, solution, 8, 40000, EstimatorMethod.tilted_is, seed=3)
        assert abs(estimate.value - exact) <= 4.0 * estimate.stderr

    def test_seed_reproducible(self, reference_env, reference_solution):
        """Same seed, same blocks, same value"""
        a = estimate_survival(reference_env, reference_solution, 10, 5000, EstimatorMethod.tilted_is, seed=4)
        b = estimate_survival(reference_env, reference_solution, 10, 5000, EstimatorMethod.tilted_is, seed=4)
        assert a.value == b.value
        assert a.stderr == b.stderr

    def test_n_zero(self, reference_env):
        estimate = estimate_survival(reference_env, None, 0, 10, EstimatorMethod.naive, seed=1)
        assert estimate.value == 1.0

    def test_tilted_needs_solution(self, reference_env):
        with pytest.raises(ValueError):
            estimate_survival(reference_env, None, 4, 10, EstimatorMethod.tilted_is, seed=1)

    def test_mc_is_not_a_survival_method(self, reference_env, reference_solution):
        with pytest.raises(ValueError):
            estimate_survival(reference_env, reference_solution, 4, 10, EstimatorMethod.mc, seed=1)


class TestConditionedPopulation:
    """Two-stage sampler of (environment, path) given survival"""

    def test_shares_streams_with_tilted_estimator(self, reference_env, reference_solution):
        """The environment stage reproduces the tilted-is estimate"""
        sample = conditioned_population(reference_env, reference_solution, 8, 4000, 12)
        estimate = estimate_survival(reference_env, reference_solution, 8, 4000, EstimatorMethod.tilted_is, seed=12)
        assert sample.survival_estimate() == pytest.approx(estimate.value, rel=1e-9)

    def test_law_against_exact(self, binary_env):
        """Weighted law of Z_n given Z_n > 0 close to the annealed chain"""
        n = 5
        solution = solve_beta(binary_env)
        sample = conditioned_population(binary_env, solution, n, 20000, 14)
        exact = pmf_from_result(exact_conditional_pmf(binary_env, n))
        assert sample.excluded_mass() < 1e-9
        assert np.all(sample.final > 0)
        tv = tv_distance(sample.pmf(), exact)
        assert tv < 0.05, f"TV {tv:.4f}, ESS {sample.ess():.0f}"

    @pytest.mark.slow
    def test_law_at_n10_within_tv(self, binary_env):
        """Weighted law of Z_10 within TV 0.01 of the exact law"""
        n = 10
        sample = conditioned_population(binary_env, solve_beta(binary_env), n, 4_000_000, 21, workers=4, floor=0.0)
        exact = pmf_from_result(exact_conditional_pmf(binary_env, n))
        assert sample.excluded_mass() < 1e-3
        tv = tv_distance(sample.pmf(), exact)
        assert tv <= 0.01, f"TV {tv:.4f}, ESS {sample.ess():.0f}"

    def test_summaries_and_paths(self, reference_env, reference_solution):
        """Path summaries cover the included environments only"""
        summary = lambda sums, sizes: {"end": sums[:, -1], "max_z": sizes.max(axis=1)}  # noqa: E731
        sample = conditioned_population(
            reference_env, reference_solution, 6, 500, 15, summary=summary, keep_paths=True,
        )
        included = int(sample.included.sum())
        assert sample.summaries["end"].shape == (included,)
        assert sample.sizes.shape == (included, 7)
        assert np.all(sample.sizes[:, -1] > 0)
        assert sample.weights().max() == pytest.approx(1.0)
        assert sample.to_dict()["included"] == included

    def test_floor_excludes(self, reference_env, reference_solution):
        """Environments below the survival floor carry excluded mass"""
        sample = conditioned_population(reference_env, reference_solution, 20, 2000, 16, floor=0.5)
        assert sample.below_floor > 0
        assert 0.0 < sample.excluded_mass() <= 1.0

    def test_n_positive(self, reference_env, reference_solution):
        with pytest.raises(ValueError):
            conditioned_population(reference_env, reference_solution, 0, 10, 1)
