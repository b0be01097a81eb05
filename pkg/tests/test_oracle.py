"""
Unit Tests for the exact enumeration oracle
"""
import math

import numpy as np
import pytest

from errors import SizeLimit, TailMass
from models import QuantityTag, RenewalSide
from oracle.enumeration import (
    annealed_kernel,
    exact_conditional_pmf,
    exact_prob_min_nonneg,
    exact_ratio,
    exact_renewal,
    exact_survival,
    exact_walk_functional,
    iter_sequence_blocks,
    pmf_from_result,
)
from randwalk.walk import Constant


class TestEnumeration:
    """Streamed lexicographic sequence blocks"""

    def test_lexicographic_order(self):
        blocks = list(iter_sequence_blocks(3, 2, chunk=4))
        seqs = np.concatenate(blocks)
        assert [b.shape[0] for b in blocks] == [4, 4, 1]
        assert seqs.tolist() == [[i, j] for i in range(3) for j in range(3)]

    def test_index_range(self):
        seqs = np.concatenate(list(iter_sequence_blocks(2, 3, start=5, stop=7)))
        assert seqs.tolist() == [[1, 0, 1], [1, 1, 0]]

    def test_zero_length(self):
        (block,) = list(iter_sequence_blocks(4, 0))
        assert block.shape == (1, 0)


class TestExactSurvival:
    """Sums over every atom sequence"""

    def test_one_step(self, reference_env):
        """P{Z_1 > 0} = sum_i w_i (1 - q_i(0))"""
        expected = math.fsum(w * (1.0 - law.mass_at_zero()) for w, law in zip(reference_env.weights(), reference_env.laws))
        assert exact_survival(reference_env, 1).value == pytest.approx(expected, rel=1e-14)

    def test_workers_agree(self, reference_env, monkeypatch):
        """Splitting the index range across workers changes nothing but the last ulps"""
        from config import settings

        monkeypatch.setattr(settings, "ORACLE_CHUNK", 64)
        serial = exact_survival(reference_env, 7, workers=1)
        parallel = exact_survival(reference_env, 7, workers=2)
        assert parallel.value == pytest.approx(serial.value, rel=1e-14)
        assert serial.enumeration_size == 3 ** 7

    def test_budget(self, reference_env):
        with pytest.raises(SizeLimit):
            exact_survival(reference_env, 12, budget=1000)

    def test_weights_sum(self, reference_env):
        """E[1] = 1 over sequences"""
        assert exact_walk_functional(reference_env, 5, Constant(1.0)).value == pytest.approx(1.0, abs=1e-14)

    def test_ratio(self, reference_env):
        result = exact_ratio(reference_env, 5)
        assert result.quantity == QuantityTag.survival_ratio
        assert result.value == pytest.approx(result.details["survival"] / result.details["prob_min_nonneg"])
        assert exact_prob_min_nonneg(reference_env, 5).value == result.details["prob_min_nonneg"]


class TestExactRenewal:
    """Truncated renewal series on the simple random walk"""

    def test_u_one_term(self, pm1_tilted):
        """K = 1: u_1(x) = 1 + P{X < 0, -X <= x}"""
        assert exact_renewal(pm1_tilted, RenewalSide.u, 0.0, 1).value == pytest.approx(1.0)
        assert exact_renewal(pm1_tilted, RenewalSide.u, 1.0, 1).value == pytest.approx(1.5)

    def test_v_zero(self, pm1_tilted):
        """v(0) = 1 whatever K"""
        assert exact_renewal(pm1_tilted, RenewalSide.v, 0.0, 8).value == 1.0

    def test_u_increases_in_k(self, pm1_tilted):
        """u_K(1) increases towards u(1) = 2; odd k contribute, even k do not"""
        values = [exact_renewal(pm1_tilted, RenewalSide.u, 1.0, K).value for K in (1, 2, 5, 12)]
        assert values[0] == pytest.approx(values[1])
        assert values[1] < values[2] < values[3] < 2.0
        assert values[3] == pytest.approx(1.0 + 0.5 + 1 / 8 + 2 / 32 + 5 / 128 + 14 / 512 + 42 / 2048, rel=1e-9)


class TestConditionalPmf:
    """Annealed chain on a truncated state space"""

    def test_kernel_matches_sequences(self, binary_env, reference_env):
        """Averaged kernel and sequence mixture give the same law"""
        for env, n, zmax in ((binary_env, 5, None), (reference_env, 3, 800)):
            kernel = exact_conditional_pmf(env, n, zmax=zmax, tail_limit=1e-6)
            sequences = exact_conditional_pmf(env, n, zmax=zmax, method="sequences", tail_limit=1e-6)
            p, q = pmf_from_result(kernel), pmf_from_result(sequences)
            assert max(abs(p.get(z, 0.0) - q.get(z, 0.0)) for z in set(p) | set(q)) < 1e-12
            assert kernel.value == pytest.approx(sequences.value, rel=1e-10)

    def test_survival_matches(self, binary_env):
        """Alive mass of the chain equals the enumerated survival"""
        result = exact_conditional_pmf(binary_env, 6)
        assert result.details["survival"] == pytest.approx(exact_survival(binary_env, 6).value, rel=1e-12)
        pmf = pmf_from_result(result)
        assert sum(pmf.values()) == pytest.approx(1.0)
        assert all(z % 2 == 0 for z in pmf)

    def test_kernel_rows_are_laws(self, binary_env):
        kernel = annealed_kernel(binary_env, 16)
        # rows with z <= 8 parents cannot exceed 16 children
        assert np.allclose(kernel[:9].sum(axis=1), 1.0)

    def test_tail_mass(self, reference_env):
        """Geometric laws put mass above any zmax"""
        with pytest.raises(TailMass):
            exact_conditional_pmf(reference_env, 4, zmax=20)

    def test_size_limit(self, binary_env):
        with pytest.raises(SizeLimit):
            exact_conditional_pmf(binary_env, 20, method="sequences")

    def test_unknown_method(self, binary_env):
        with pytest.raises(ValueError):
            exact_conditional_pmf(binary_env, 2, method="other")

    def test_linear_fractional_matches_kernel(self, reference_env):
        """Closed-form geometric laws reproduce the annealed chain"""
        kernel = exact_conditional_pmf(reference_env, 3, zmax=800, tail_limit=1e-6)
        closed = exact_conditional_pmf(reference_env, 3, zmax=800, method="linear-fractional", tail_limit=1e-6)
        p, q = pmf_from_result(kernel), pmf_from_result(closed)
        assert max(abs(p.get(z, 0.0) - q.get(z, 0.0)) for z in set(p) | set(q)) < 1e-7
        assert closed.value == pytest.approx(kernel.value, rel=1e-4)

    def test_linear_fractional_tail(self, reference_env):
        """Unbounded support at n = 8: the exact tail is reported, not raised"""
        result = exact_conditional_pmf(reference_env, 8, method="linear-fractional", tail_limit=1.0)
        details = result.details
        assert details["zmax"] == 1 << 14
        assert details["survival"] == pytest.approx(exact_survival(reference_env, 8).value, rel=1e-10)
        assert sum(pmf_from_result(result).values()) + details["tail_conditional"] == pytest.approx(1.0, rel=1e-9)
        assert 0.0 < details["tail_conditional"] < 0.01
        with pytest.raises(TailMass):
            exact_conditional_pmf(reference_env, 8, method="linear-fractional")

    def test_linear_fractional_needs_geometric(self, binary_env, reference_env):
        with pytest.raises(ValueError):
            exact_conditional_pmf(binary_env, 3, method="linear-fractional")
        with pytest.raises(ValueError):
            exact_conditional_pmf(reference_env, 0, method="linear-fractional")
