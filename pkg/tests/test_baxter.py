"""
Unit Tests for the Baxter identity check
"""
import pytest

from errors import TruncationWarning
from randwalk.baxter import baxter_check


class TestBaxter:
    """Both sides of the truncated identity"""

    def test_exact_ssrw(self, ssrw_env):
        """Simple random walk, enumerated terms: sides agree to the truncation order"""
        result = baxter_check(ssrw_env, theta=1.0, t=0.4, K=16)
        assert result.method == "exact"
        assert len(result.lhs_terms) == 16
        assert result.gap <= 1e-5, f"lhs {result.lhs!r} rhs {result.rhs!r}"

    def test_exact_tilted_pm1(self, pm1_tilted):
        """The tilted +-1 walk is the same identity"""
        result = baxter_check(pm1_tilted, theta=0.5, t=0.4, K=16)
        assert result.gap <= 1e-5
        assert result.partial_lhs()[-1] == pytest.approx(result.lhs)

    def test_monte_carlo(self, reference_env, reference_solution):
        """Common-path Monte Carlo on a non-lattice walk within 4 sigma"""
        from tilting.tilt import tilted_env

        tilted = tilted_env(reference_env, reference_solution)
        result = baxter_check(tilted, theta=1.0, t=0.4, K=16, method="mc", reps=40000, seed=17)
        bar = 4.0 * (result.lhs_stderr + result.rhs_stderr) + 2e-3
        assert result.gap <= bar, f"gap {result.gap} vs bar {bar}"

    def test_truncation_warning(self, ssrw_env):
        """t^K above the truncation target warns"""
        with pytest.warns(TruncationWarning):
            baxter_check(ssrw_env, theta=1.0, t=0.9, K=4)

    def test_bad_arguments(self, ssrw_env):
        with pytest.raises(ValueError):
            baxter_check(ssrw_env, theta=0.0, t=0.5, K=4)
        with pytest.raises(ValueError):
            baxter_check(ssrw_env, theta=1.0, t=1.0, K=4)
        with pytest.raises(ValueError):
            baxter_check(ssrw_env, theta=1.0, t=0.5, K=4, method="mc")
        with pytest.raises(ValueError):
            baxter_check(ssrw_env, theta=1.0, t=0.5, K=4, method="other")
