"""
Unit Tests for the verification suites
"""
import pytest

from errors import NotSubcritical
from harness.verdicts import (
    SUITES,
    CheckResult,
    CheckStatus,
    SuiteOptions,
    SuiteReport,
    SuiteRunner,
    run_verification,
)

SMALL = SuiteOptions(reps=3000, seed=5, lemma_envs=50, anchor_n=6)
DETERMINISTIC = {"tilt-residual", "tilted-drift", "change-of-measure", "duality", "baxter", "inequalities"}


class TestSuiteReport:
    """Status aggregation"""

    def _report(self, *statuses: CheckStatus) -> SuiteReport:
        report = SuiteReport(suites=["basics"])
        report.checks = [CheckResult(name=f"c{i}", status=s, message="m") for i, s in enumerate(statuses)]
        return report.finalize()

    def test_all_pass(self):
        report = self._report(CheckStatus.PASS, CheckStatus.SKIPPED)
        assert report.overall_status == CheckStatus.PASS
        assert report.exit_code() == 0

    def test_warning_does_not_fail(self):
        report = self._report(CheckStatus.PASS, CheckStatus.WARNING)
        assert report.overall_status == CheckStatus.WARNING
        assert report.exit_code() == 0

    def test_fail_and_error(self):
        assert self._report(CheckStatus.FAIL, CheckStatus.PASS).exit_code() == 1
        report = self._report(CheckStatus.FAIL, CheckStatus.ERROR, CheckStatus.WARNING)
        assert report.overall_status == CheckStatus.ERROR
        assert report.exit_code() == 3
        assert len(report.failures) == 2

    def test_to_dict(self):
        data = self._report(CheckStatus.PASS).to_dict()
        assert data["overall_status"] == "pass"
        assert data["checks"][0]["status"] == "pass"
        assert "timestamp" in data["checks"][0]


class TestSuiteRunner:
    """Checks on the +-1 environment with small budgets"""

    @pytest.fixture(scope="class")
    def runner(self, pm1_env):
        return SuiteRunner(pm1_env, SMALL)

    def test_requires_subcritical(self, ssrw_env):
        with pytest.raises(NotSubcritical):
            SuiteRunner(ssrw_env, SMALL)

    def test_unknown_suite(self, runner):
        with pytest.raises(ValueError):
            runner.checks_for("theorem9")
        assert set(SUITES) == {"basics", "theorem1", "corollary", "theorem2", "theorem3", "prop21"}

    def test_guard_turns_errors_into_results(self):
        def check_broken():
            raise ValueError("boom")

        (result,) = SuiteRunner._guard(check_broken)
        assert result.name == "broken"
        assert result.status == CheckStatus.ERROR
        assert "boom" in result.message

    def test_exact_checks(self, runner):
        """Enumeration-backed checks pass on the lattice walk"""
        assert runner.check_duality().status == CheckStatus.PASS
        assert runner.check_change_of_measure().status == CheckStatus.PASS
        baxter = runner.check_baxter()
        assert baxter.details["method"] == "exact"
        assert baxter.status == CheckStatus.PASS

    def test_inequalities_on_small_sample(self, runner):
        result = runner.check_lemmas()
        assert result.status == CheckStatus.PASS, result.message
        assert "over 50 environments" in result.message

    @pytest.mark.slow
    def test_inequalities_on_default_sample(self, reference_env):
        """Default budget draws 1e5 environments"""
        assert SuiteOptions().lemma_envs == 100_000
        result = SuiteRunner(reference_env, SuiteOptions(seed=3)).check_lemmas()
        assert result.status == CheckStatus.PASS, result.message
        assert "over 100000 environments" in result.message

    def test_corollary_is_ratio_only_on_lattice(self, runner):
        options = SMALL.model_copy(update={"theorem1_ns": (4, 8)})
        results = SuiteRunner(runner.env, options).check_corollary()
        consistency = next(r for r in results if r.name == "kappa-consistency")
        assert consistency.status == CheckStatus.SKIPPED

    def test_prop21_covers_both_sides(self, pm1_env):
        """Walk limits from x >= 0 and x <= 0, plus both conditional ratios"""
        options = SMALL.model_copy(update={"prop21_ns": (10, 20), "theorem1_ns": (4, 8), "renewal_xmax": 4.0})
        runner = SuiteRunner(pm1_env, options)
        results = runner.check_prop21()
        names = {r.name for r in results}
        assert {"prop21-level-x=0", "prop21-level-x=2", "prop21-x-dependence"} <= names
        assert {"prop21-neg-level-x=0", "prop21-neg-level-x=-2", "prop21-neg-x-dependence"} <= names
        assert {"conditional-ratio-u", "conditional-ratio-v", "first-min-identity"} <= names
        assert {"prop21-v-x=-2", "conditional-ratio-v"} <= set(runner.tables)
        for result in results:
            assert result.status != CheckStatus.ERROR, f"{result.name}: {result.message}"
            if "level" in result.name or result.name.startswith("conditional-ratio"):
                assert result.status == CheckStatus.SKIPPED

    def test_conditional_anchor_runs_on_geometric_env(self, reference_env):
        """Unbounded geometric support: the closed-form law keeps the anchor live"""
        options = SMALL.model_copy(update={"anchor_n": 8})
        result = SuiteRunner(reference_env, options)._theorem2_anchor()
        assert result.status in (CheckStatus.PASS, CheckStatus.FAIL), result.message
        assert result.details["method"] == "linear-fractional"
        assert result.details["tail_conditional"] <= options.anchor_tv
        assert 0.0 <= result.statistic <= 1.0

    @pytest.mark.slow
    def test_conditional_anchor_passes_on_reference_env(self, reference_env):
        """Weighted pmf at n = 8 within TV 0.01 of the exact law"""
        options = SuiteOptions(reps=10_000_000, seed=9, workers=8, anchor_n=8)
        result = SuiteRunner(reference_env, options)._theorem2_anchor()
        assert result.status == CheckStatus.PASS, result.message

    @pytest.mark.asyncio
    async def test_basics_suite(self, pm1_env):
        report = await run_verification(pm1_env, ["basics"], SMALL)
        names = {c.name for c in report.checks}
        assert DETERMINISTIC <= names
        assert {"moment-law", "survival-anchor"} <= names
        for check in report.checks:
            if check.name in DETERMINISTIC:
                assert check.status == CheckStatus.PASS, f"{check.name}: {check.message}"
            assert check.status != CheckStatus.ERROR, f"{check.name}: {check.message}"
        assert report.suites == ["basics"]

    @pytest.mark.asyncio
    async def test_tables_collected(self, reference_env):
        options = SMALL.model_copy(update={"theorem1_ns": (4, 8)})
        report = await SuiteRunner(reference_env, options).run_suite(["theorem1", "theorem1"])
        assert report.suites == ["theorem1"]
        assert "theorem1-ratio" in report.tables
        assert {c.name for c in report.checks} == {"theorem1-stabilization", "theorem1-anchor"}

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_theorem1_stabilizes_on_reference_env(self, reference_env):
        """Desk-scale run: the survival ratio settles within 10% by n = 160"""
        options = SuiteOptions(reps=10_000_000, seed=7, workers=8)
        report = await SuiteRunner(reference_env, options).run_suite(["theorem1"])
        check = next(c for c in report.checks if c.name == "theorem1-stabilization")
        assert check.status == CheckStatus.PASS, check.message
