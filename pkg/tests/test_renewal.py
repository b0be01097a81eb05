"""
Unit Tests for renewal tables and boundary laws

The tilted +-1 walk is the simple symmetric random walk, where
u(x) = floor(x) + 1 and v(x) = 2 ceil(|x|) with v(0) = 1.
"""
import math

import numpy as np
import pytest

from models import RenewalSide
from oracle.enumeration import exact_renewal
from randwalk.renewal import (
    BoundaryKind,
    RenewalMethod,
    boundary_law,
    build_renewal_table,
    harmonic_check,
    renewal_u,
    subadditivity_check,
)

LADDER_CAP = 4096


@pytest.fixture(scope="module")
def ssrw_u(pm1_tilted):
    return build_renewal_table(pm1_tilted, RenewalSide.u, 8.0, 20000, 5, method=RenewalMethod.ladder, time_cap=LADDER_CAP)


@pytest.fixture(scope="module")
def ssrw_v(pm1_tilted):
    return build_renewal_table(pm1_tilted, RenewalSide.v, 8.0, 40000, 6, method=RenewalMethod.ladder, time_cap=LADDER_CAP)


class TestLadderTables:
    """Test ladder-height tables against the simple random walk"""

    def test_u_is_exact(self, ssrw_u):
        """Strict descending heights are all 1: u(x) = floor(x) + 1"""
        assert ssrw_u.is_step_function
        assert ssrw_u.step == pytest.approx(1.0)
        expected = np.arange(9) + 1.0
        assert np.allclose(ssrw_u.estimate, expected), f"u = {ssrw_u.estimate}"
        assert float(ssrw_u(2.5)) == pytest.approx(3.0)
        assert float(ssrw_u(-0.5)) == 0.0

    def test_v_is_close(self, ssrw_v):
        """Weak ascending heights 0 or 1 w.p. 1/2: v(x) = 2 ceil(|x|), v(0) = 1"""
        assert ssrw_v.estimate[0] == 1.0
        expected = 2.0 * np.arange(1, 9)
        rel = np.abs(ssrw_v.estimate[1:] - expected) / expected
        assert rel.max() < 0.05, f"v = {ssrw_v.estimate}"
        # ceil lookup: v(-0.5) = v(-1)
        assert float(ssrw_v(-0.5)) == pytest.approx(float(ssrw_v.estimate[1]))
        assert float(ssrw_v(0.5)) == 0.0

    def test_rows(self, ssrw_v):
        """Rows carry x in natural coordinates"""
        rows = ssrw_v.to_rows()
        assert rows[0]["x"] == 0.0
        assert rows[2]["x"] == pytest.approx(-2.0)
        assert set(rows[0]) == {"x", "estimate", "stderr", "K_term"}

    def test_harmonic(self, pm1_tilted, ssrw_u):
        """E[u(x+X); x+X >= 0] = u(x) on the simple random walk"""
        for x in (0.0, 1.0, 3.0, 2.5):
            result = harmonic_check(pm1_tilted, x, ssrw_u)
            assert abs(result.lhs - result.rhs) < 1e-9, f"x={x}: {result.to_dict()}"

    def test_subadditive(self, ssrw_u, ssrw_v):
        """Renewal functions are subadditive up to their bars"""
        assert subadditivity_check(ssrw_u)["passed"]
        assert subadditivity_check(ssrw_v)["passed"]


class TestSeriesTables:
    """Test the truncated series against exact enumeration"""

    def test_series_matches_enumeration(self, pm1_tilted):
        """Same K: Monte Carlo within 4 sigma of the enumerated series"""
        K = 10
        table = build_renewal_table(pm1_tilted, RenewalSide.u, 4.0, 20000, 9, K=K)
        for x in (0.0, 2.0, 4.0):
            exact = exact_renewal(pm1_tilted, RenewalSide.u, x, K)
            i = int(round(x))
            gap = abs(table.estimate[i] - exact.value)
            assert gap <= 4.0 * table.stderr[i] + 1e-12, f"x={x}: {table.estimate[i]} vs {exact.value}"

    def test_v_series_matches_enumeration(self, pm1_tilted):
        """v side, strict inequality at the grid points"""
        K = 10
        table = build_renewal_table(pm1_tilted, RenewalSide.v, 3.0, 20000, 10, K=K)
        for r in (0.0, 1.0, 3.0):
            exact = exact_renewal(pm1_tilted, RenewalSide.v, -r, K)
            i = int(round(r))
            assert abs(table.estimate[i] - exact.value) <= 4.0 * table.stderr[i] + 1e-12, f"x={-r}"

    def test_single_point_estimate(self, pm1_tilted):
        """renewal_u returns an Estimate carrying the K term"""
        estimate = renewal_u(pm1_tilted, 2.0, 8, 5000, 3)
        assert estimate.value >= 1.0
        assert "K_term" in estimate.details
        with pytest.raises(ValueError):
            renewal_u(pm1_tilted, -1.0, 8, 100, 3)

    def test_k_must_be_positive(self, pm1_tilted):
        with pytest.raises(ValueError):
            build_renewal_table(pm1_tilted, RenewalSide.u, 2.0, 100, 1, K=0)


class TestBoundaryLaw:
    """Test mu and nu normalizers on the simple random walk"""

    def test_mu_normalizer(self, ssrw_u):
        """int e^{-theta z}(floor(z)+1) dz = 1/(theta(1-e^{-theta}))"""
        for theta in (0.5, 1.0, 2.0):
            law = boundary_law(ssrw_u, theta)
            expected = 1.0 / (theta * (1.0 - math.exp(-theta)))
            assert law.which == BoundaryKind.mu
            assert law.inverse_normalizer == pytest.approx(expected, rel=1e-6), f"theta={theta}"
            assert law.total_mass() == pytest.approx(1.0, rel=1e-6)

    def test_nu_normalizer(self, ssrw_v):
        """int e^{theta z} v(z) dz = 2/(theta(1-e^{-theta})) up to the table error"""
        law = boundary_law(ssrw_v, 1.0)
        assert law.which == BoundaryKind.nu
        assert law.inverse_normalizer == pytest.approx(2.0 / (1.0 - math.exp(-1.0)), rel=0.05)
        assert law.total_mass() == pytest.approx(1.0, rel=1e-6)

    def test_density_support(self, ssrw_u):
        law = boundary_law(ssrw_u, 1.0)
        assert float(law.density(-1.0)) == 0.0
        assert float(law.density(0.5)) == pytest.approx(law.normalizer * math.exp(-0.5))

    def test_theta_positive(self, ssrw_u):
        with pytest.raises(ValueError):
            boundary_law(ssrw_u, 0.0)
