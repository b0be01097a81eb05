"""
Unit Tests for offspring laws and environment laws

Generating-function calculus, sampling, parsing and lattice detection.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st
from pydantic import ValidationError
from scipy import stats

from environment.env_law import EnvironmentLaw, assumption_report, parse_environment
from environment.offspring import OffspringLaw
from errors import DomainError, EnvironmentConfigError


def _laws(p: float, lam: float):
    return [
        OffspringLaw.geometric(p),
        OffspringLaw.poisson(lam),
        OffspringLaw.binary(p),
        OffspringLaw.explicit([0.3, 0.2, 0.1, 0.4]),
    ]


class TestOffspringLaw:
    """Test pgf, survival map and moments"""

    def test_pgf_endpoints(self):
        """f(1) = 1 and f(0) is the mass at zero for every kind"""
        for law in _laws(0.4, 1.7):
            assert abs(law.pgf(1.0) - 1.0) < 1e-12, f"{law.label()}: f(1) = {law.pgf(1.0)}"
            assert abs(law.pgf(0.0) - law.mass_at_zero()) < 1e-12, f"{law.label()}: f(0) != q(0)"

    def test_pgf_domain(self):
        """Arguments outside [0,1] are rejected"""
        law = OffspringLaw.geometric(0.5)
        with pytest.raises(DomainError):
            law.pgf(1.5)
        with pytest.raises(DomainError):
            law.pgf(np.array([0.2, -0.1]))

    @given(
        p=st.floats(min_value=0.05, max_value=0.95),
        lam=st.floats(min_value=0.1, max_value=5.0),
        h=st.floats(min_value=0.0, max_value=1.0),
    )
    @hyp_settings(max_examples=60, deadline=None)
    def test_survival_map_matches_pgf(self, p, lam, h):
        """g(h) = 1 - f(1 - h) for every kind"""
        for law in _laws(p, lam):
            direct = 1.0 - law.pgf(1.0 - h)
            assert abs(law.survival_map(h) - direct) <= 1e-12, f"{law.label()} at h={h}"

    @given(p=st.floats(min_value=0.05, max_value=0.95), h=st.floats(min_value=1e-6, max_value=1.0))
    @hyp_settings(max_examples=40, deadline=None)
    def test_log_survival_ratio(self, p, h):
        """log(g(h)/h) in closed form agrees with the direct ratio"""
        for law in _laws(p, 2.0):
            direct = math.log(law.survival_map(h) / h)
            assert abs(law.log_survival_ratio(h) - direct) < 1e-9, f"{law.label()} at h={h}"

    def test_log_survival_ratio_at_zero(self):
        """At h = 0 the ratio is the mean"""
        for law in _laws(0.3, 0.8):
            assert abs(law.log_survival_ratio(0.0) - law.log_mean()) < 1e-12, law.label()

    def test_log_mean_configuration_is_exact(self):
        """A law configured by log-mean keeps X exactly"""
        assert OffspringLaw.geometric_log_mean(-1.0).log_mean() == -1.0
        assert OffspringLaw.poisson_log_mean(1.0).log_mean() == 1.0
        assert abs(OffspringLaw.geometric_log_mean(0.7).mean() - math.exp(0.7)) < 1e-12

    def test_moments(self):
        """Geometric eta is 2; binary zeta(1) is 1/p and vanishes above the support"""
        assert abs(OffspringLaw.geometric(0.3).eta() - 2.0) < 1e-12
        binary = OffspringLaw.binary(0.4)
        assert abs(binary.zeta(1) - 1.0 / 0.4) < 1e-12
        assert binary.zeta(3) == 0.0
        with pytest.raises(DomainError):
            binary.zeta(0)

    def test_invalid_parameters(self):
        """Pydantic rejects impossible laws"""
        with pytest.raises(ValidationError):
            OffspringLaw.geometric(1.2)
        with pytest.raises(ValidationError):
            OffspringLaw.explicit([0.5, 0.2])
        with pytest.raises(ValidationError):
            OffspringLaw.explicit([1.0])

    def test_sample_sum_mean(self):
        """Sum of z parents has mean z * m"""
        rng = np.random.default_rng(7)
        z = np.full(20000, 30)
        for law in _laws(0.45, 1.3):
            totals = law.sample_sum(z, rng).astype(float)
            stderr = totals.std(ddof=1) / math.sqrt(totals.size)
            gap = abs(totals.mean() - 30 * law.mean())
            assert gap < 5 * stderr, f"{law.label()}: mean {totals.mean()} vs {30 * law.mean()}"

    @pytest.mark.parametrize("law", _laws(0.55, 2.5), ids=["geometric", "poisson", "binary", "explicit"])
    def test_sample_matches_pmf(self, law):
        """Chi-square goodness of fit of 1e5 draws against the pmf"""
        draws = law.sample(100_000, np.random.default_rng(2024)).astype(np.int64)
        counts = np.bincount(draws)
        probs = law.pmf(np.arange(counts.size))
        assert np.all(counts[probs == 0.0] == 0), f"{law.label()}: draws outside the support"
        cells = np.flatnonzero(probs * draws.size >= 5.0)
        observed = counts[cells].astype(float)
        expected = probs[cells] * draws.size
        # remaining states, the tail included, folded into the last cell
        observed[-1] += draws.size - observed.sum()
        expected[-1] += draws.size - expected.sum()
        p_value = stats.chisquare(observed, expected).pvalue
        assert p_value > 1e-3, f"{law.label()}: chi-square p = {p_value:.2e}"

    def test_sample_sum_zero_parents(self):
        """No parents, no offspring"""
        rng = np.random.default_rng(1)
        out = OffspringLaw.poisson(3.0).sample_sum(np.zeros(5, dtype=np.int64), rng)
        assert np.all(out == 0)


class TestEnvironmentLaw:
    """Test environment parsing, sampling and lattice detection"""

    def test_reference_env(self, reference_env):
        """Reference fixture: three geometric atoms, non-lattice, subcritical"""
        assert reference_env.n_atoms == 3
        expected = [math.log(0.25), math.log(0.45 / 0.55), math.log(0.78 / 0.22)]
        assert np.allclose(reference_env.log_means(), expected, atol=1e-12)
        assert reference_env.mean_log_mean() < 0.0
        assert not reference_env.is_lattice()
        assert reference_env.is_all_geometric()

    def test_lattice_spans(self, pm1_env, skewed_env):
        """Two-atom walks are lattice; value span divides every X"""
        assert pm1_env.lattice_span() == pytest.approx(2.0)
        assert pm1_env.value_span() == pytest.approx(1.0)
        assert skewed_env.lattice_span() == pytest.approx(3.0)
        assert skewed_env.value_span() == pytest.approx(1.0)

    def test_parse_rejects_bad_weights(self):
        """Weights must sum to 1 within 1e-9"""
        data = {"atoms": [
            {"weight": 0.5, "law": {"kind": "geometric", "p": 0.5}},
            {"weight": 0.4, "law": {"kind": "geometric", "p": 0.2}},
        ]}
        with pytest.raises(EnvironmentConfigError):
            parse_environment(data)

    def test_parse_rejects_bad_law(self):
        """Law errors carry the atom index"""
        data = {"atoms": [{"weight": 1.0, "law": {"kind": "geometric", "p": 2.0}}]}
        with pytest.raises(EnvironmentConfigError, match="atoms\\[0\\]"):
            parse_environment(data)
        with pytest.raises(EnvironmentConfigError):
            parse_environment({"laws": []})

    def test_parse_renormalizes(self):
        """Weights off by less than 1e-9 are renormalized"""
        data = {"atoms": [
            {"weight": 0.5 + 4e-10, "law": {"kind": "binary", "p": 0.3}},
            {"weight": 0.5, "law": {"kind": "binary", "p": 0.8}},
        ]}
        env = parse_environment(data)
        assert abs(env.weights().sum() - 1.0) < 1e-15

    def test_config_roundtrip(self, reference_env, pm1_env):
        """to_config feeds back into the parser unchanged"""
        for env in (reference_env, pm1_env):
            again = parse_environment(env.to_config())
            assert np.allclose(again.log_means(), env.log_means(), atol=0.0)
            assert np.allclose(again.weights(), env.weights(), atol=0.0)

    def test_sample_matrix_frequencies(self, reference_env):
        """Atom frequencies match the weights"""
        rng = np.random.default_rng(3)
        atoms = reference_env.sample_matrix(2000, 50, rng)
        assert atoms.shape == (2000, 50)
        freq = np.bincount(atoms.ravel(), minlength=3) / atoms.size
        assert np.allclose(freq, reference_env.weights(), atol=0.01), f"frequencies {freq}"

    def test_assumption_report(self, reference_env, ssrw_env):
        """A1 feasible on the reference env, not on the driftless walk"""
        report = assumption_report(reference_env)
        assert report.a1_feasible
        assert report.phi_at_0 < 0.0 < report.phi_at_1
        critical = assumption_report(ssrw_env)
        assert not critical.a1_feasible
        assert any("not subcritical" in m for m in critical.messages)

    def test_weights_invariant(self):
        """EnvironmentLaw itself enforces the 1e-12 weight sum"""
        with pytest.raises(ValidationError):
            EnvironmentLaw.from_atoms([0.5, 0.49], [OffspringLaw.binary(0.2), OffspringLaw.binary(0.9)])
