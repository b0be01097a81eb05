"""
Verification suites

Runs the harness checks for one environment and collects machine-checkable
verdicts (statistic, bars, threshold, status). Independent checks fan out
over a thread pool through asyncio.
"""
import asyncio
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from branching.population import simulate_populations
from branching.quenched import lemma_checks, log_survival_batch, walk_from_atoms
from config import settings
from environment.env_law import EnvironmentLaw, assumption_report
from errors import BPREError, SizeLimit
from harness.limit_harness import (
    RRule,
    conditional_ratio_tables,
    corollary_scaling,
    first_min_identity,
    kappa_consistency,
    prop21_table,
    survival_scan,
    theorem1_ratio,
    theorem2_conditional,
    theorem3_flatness,
    walk_scaling,
    x_dependence,
)
from harness.tables import ConvergenceTable
from models import EstimatorMethod, RenewalSide
from montecarlo.stats import coarsen_pmf, mean_stderr, tv_distance
from montecarlo.streams import child_rng
from oracle.enumeration import exact_conditional_pmf, exact_ratio, exact_survival, exact_walk_functional, pmf_from_result
from randwalk.baxter import baxter_check
from randwalk.renewal import RenewalMethod, build_renewal_table
from randwalk.walk import Constant, ExpEnd, ExpFirstMin, ExpMaxNeg, GridFunction
from tilting.tilt import StableNorm, change_of_measure_check, solve_beta, tilted_env

logger = logging.getLogger(__name__)

BAXTER_TOL = 2e-3
# bounded test function of the endpoint in the conditional-ratio checks
RATIO_TEST_FUNCTION = GridFunction(x=(-1.0, 0.0, 1.0), y=(0.0, 1.0, 0.0))

SUITES = ("basics", "theorem1", "corollary", "theorem2", "theorem3", "prop21")


class CheckStatus(str, Enum):
    """Status of a verification check"""
    PASS = "pass"
    FAIL = "fail"
    WARNING = "warning"
    SKIPPED = "skipped"
    ERROR = "error"


@dataclass
class CheckResult:
    """Result of a single verification check"""
    name: str
    status: CheckStatus
    message: str
    statistic: Optional[float] = None
    threshold: Optional[float] = None
    bars: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status.value,
            "message": self.message,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "bars": self.bars,
            "details": self.details,
            "timestamp": self.timestamp.isoformat(),
        }


@dataclass
class SuiteReport:
    """Complete verification report"""
    suites: List[str]
    checks: List[CheckResult] = field(default_factory=list)
    tables: Dict[str, ConvergenceTable] = field(default_factory=dict)
    overall_status: CheckStatus = CheckStatus.PASS
    failures: List[str] = field(default_factory=list)
    elapsed: float = 0.0

    def finalize(self) -> "SuiteReport":
        self.failures = []
        status = CheckStatus.PASS
        for check in self.checks:
            if check.status == CheckStatus.ERROR:
                status = CheckStatus.ERROR
                self.failures.append(f"{check.name}: {check.message}")
            elif check.status == CheckStatus.FAIL:
                if status != CheckStatus.ERROR:
                    status = CheckStatus.FAIL
                self.failures.append(f"{check.name}: {check.message}")
            elif check.status == CheckStatus.WARNING and status == CheckStatus.PASS:
                status = CheckStatus.WARNING
        self.overall_status = status
        return self

    def exit_code(self) -> int:
        if self.overall_status == CheckStatus.ERROR:
            return 3
        if self.overall_status == CheckStatus.FAIL:
            return 1
        return 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suites": self.suites,
            "overall_status": self.overall_status.value,
            "failures": self.failures,
            "elapsed_ms": self.elapsed * 1000.0,
            "checks": [c.to_dict() for c in self.checks],
            "tables": {k: t.to_dict() for k, t in self.tables.items()},
        }


class SuiteOptions(BaseModel):
    """Tunables of a verify run"""
    model_config = ConfigDict(frozen=True)

    reps: int = Field(default=1_000_000, ge=1)
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    theorem1_ns: Tuple[int, ...] = (20, 40, 80, 160)
    theorem2_ns: Tuple[int, ...] = (20, 40, 80, 160)
    theorem3_ns: Tuple[int, ...] = (40, 80, 160)
    prop21_ns: Tuple[int, ...] = (50, 100, 200, 400)
    prop21_xs: Tuple[float, ...] = (0.0, 2.0)
    theta: float = Field(default=1.0, gt=0.0, description="exponential damping in the walk limits")
    moment_order: Optional[float] = Field(default=None, gt=0.0, description="defaults to beta/2")
    r_exponent: float = Field(default=0.25, gt=0.0, lt=1.0)
    stabilization_threshold: float = Field(default=settings.STABILIZATION_THRESHOLD, gt=0.0)
    scaling_threshold: float = Field(default=settings.SCALING_THRESHOLD, gt=0.0)
    renewal_method: RenewalMethod = RenewalMethod.ladder
    renewal_K: int = Field(default=settings.RENEWAL_K, ge=1)
    renewal_xmax: float = Field(default=10.0, gt=0.0)
    renewal_reps: Optional[int] = Field(default=None, ge=1)
    anchor_n: int = Field(default=8, ge=1, le=14)
    anchor_tv: float = Field(default=0.01, gt=0.0)
    lemma_envs: int = Field(default=100_000, ge=1)


def _verdict(passed: bool) -> CheckStatus:
    return CheckStatus.PASS if passed else CheckStatus.FAIL


def _within(value: float, reference: float, bar: float) -> bool:
    return abs(value - reference) <= bar


class SuiteRunner:
    """
    Runs the verification checks for one environment.

    Each check is a plain method returning CheckResult(s); run_suite fans
    the selected ones out and folds them into a SuiteReport.
    """

    def __init__(self, env: EnvironmentLaw, options: Optional[SuiteOptions] = None):
        self.env = env
        self.options = options or SuiteOptions()
        self.solution = solve_beta(env)
        self.tilted = tilted_env(env, self.solution)
        self.stable = StableNorm.from_solution(self.solution)
        self.tables: Dict[str, ConvergenceTable] = {}

    def _table(self, table: ConvergenceTable) -> ConvergenceTable:
        self.tables[table.name] = table
        return table

    def _anchor_n(self) -> Optional[int]:
        """Largest n <= anchor_n whose enumeration fits the walk budget"""
        for n in range(self.options.anchor_n, 0, -1):
            if self.env.n_atoms ** n <= settings.WALK_ORACLE_BUDGET:
                return n
        return None

    # ─────────────────────────────────────────────────────────────────
    # BASICS
    # ─────────────────────────────────────────────────────────────────

    def check_tilt(self) -> List[CheckResult]:
        report = assumption_report(self.env)
        drift = self.solution.tilted_mean()
        return [
            CheckResult(
                name="tilt-residual",
                status=_verdict(self.solution.residual <= settings.TILT_TOL),
                message=f"|phi(beta)| = {self.solution.residual:.3e}",
                statistic=self.solution.residual,
                threshold=settings.TILT_TOL,
                details={**self.solution.to_dict(), "assumptions": report.to_dict()},
            ),
            CheckResult(
                name="tilted-drift",
                status=_verdict(abs(drift) <= 1e-9),
                message=f"E_tilted[X] = {drift:.3e}",
                statistic=drift,
                threshold=1e-9,
            ),
        ]

    def check_change_of_measure(self) -> CheckResult:
        n = min(6, self._anchor_n() or 1)
        worst = 0.0
        functionals = {
            "one": Constant(1.0),
            "exp-beta-end": ExpEnd(self.solution.beta),
            "exp-end": ExpEnd(1.0),
            "max-neg": ExpMaxNeg(0.5),
            "first-min": ExpFirstMin(0.5),
        }
        gaps = {}
        for name, functional in functionals.items():
            lhs, rhs = change_of_measure_check(self.env, self.solution, n, functional)
            gaps[name] = abs(lhs - rhs)
            worst = max(worst, gaps[name])
        return CheckResult(
            name="change-of-measure",
            status=_verdict(worst <= 1e-10),
            message=f"largest |lhs - rhs| over {len(functionals)} functionals at n={n}: {worst:.3e}",
            statistic=worst,
            threshold=1e-10,
            details=gaps,
        )

    def check_duality(self) -> CheckResult:
        n = self._anchor_n()
        if n is None:
            return CheckResult(name="duality", status=CheckStatus.SKIPPED, message="enumeration budget too small")
        lhs = exact_walk_functional(self.env, n, ExpMaxNeg(1.0)).value
        rhs = exact_walk_functional(self.env, n, ExpFirstMin(1.0)).value
        gap = abs(lhs - rhs)
        return CheckResult(
            name="duality",
            status=_verdict(gap <= 1e-12),
            message=f"E[e^S; M_n < 0] vs E[e^S; tau_n = n] at n={n}: gap {gap:.3e}",
            statistic=gap,
            threshold=1e-12,
        )

    def check_baxter(self, theta: float = 1.0, t: float = 0.5, K: int = 16) -> CheckResult:
        if self.env.n_atoms ** K <= settings.WALK_ORACLE_BUDGET:
            result = baxter_check(self.env, theta, t, K)
            bar = BAXTER_TOL
        else:
            result = baxter_check(self.env, theta, t, K, method="mc", reps=min(self.options.reps, 200_000), seed=self.options.seed, workers=self.options.workers)
            bar = BAXTER_TOL + 3.0 * (result.lhs_stderr + result.rhs_stderr)
        return CheckResult(
            name="baxter",
            status=_verdict(result.gap <= bar),
            message=f"Baxter identity ({result.method}) at theta={theta}, t={t}, K={K}: gap {result.gap:.3e}",
            statistic=result.gap,
            threshold=BAXTER_TOL,
            bars=bar - BAXTER_TOL,
            details=result.to_dict(),
        )

    def check_moment_law(self, n: int = 6) -> CheckResult:
        reps = min(self.options.reps, 100_000)
        rng = child_rng(self.options.seed, "moment-law", 0)
        atoms = self.env.sample_environment(n, rng)
        quenched, _ = simulate_populations(self.env, np.tile(atoms, (reps, 1)), rng)
        annealed, _ = simulate_populations(self.env, self.env.sample_matrix(reps, n, rng), rng)
        z = {}
        for name, sizes, reference in (
            ("quenched", quenched, float(np.exp(walk_from_atoms(self.env, atoms)[-1]))),
            ("annealed", annealed, self.env.annealed_mean() ** n),
        ):
            mean, stderr = mean_stderr(sizes[:, -1].astype(float))
            z[name] = (mean - reference) / stderr if stderr > 0 else 0.0
        worst = max(abs(v) for v in z.values())
        return CheckResult(
            name="moment-law",
            status=_verdict(worst <= 4.0),
            message=f"E[Z_{n}] against e^S_n and (E m)^n: z = {z['quenched']:.2f}, {z['annealed']:.2f}",
            statistic=worst,
            threshold=4.0,
            details=z,
        )

    def check_lemmas(self) -> CheckResult:
        rng = child_rng(self.options.seed, "lemma-envs", 0)
        n = 50
        atoms = self.env.sample_matrix(self.options.lemma_envs, n, rng)
        walks = walk_from_atoms(self.env, atoms)
        log_q = log_survival_batch(self.env, atoms)
        bound_violations = int(np.sum(log_q > walks.min(axis=1) + 1e-12))
        lemma_failures = sum(0 if lemma_checks(self.env, row, 0.5).passed else 1 for row in atoms)
        total = bound_violations + lemma_failures
        return CheckResult(
            name="inequalities",
            status=_verdict(total == 0),
            message=f"{bound_violations} first-moment and {lemma_failures} lemma violations over {len(atoms)} environments",
            statistic=float(total),
            threshold=0.0,
        )

    def check_survival_anchor(self) -> CheckResult:
        n = self._anchor_n()
        if n is None:
            return CheckResult(name="survival-anchor", status=CheckStatus.SKIPPED, message="enumeration budget too small")
        from branching.estimators import estimate_survival

        exact = exact_survival(self.env, n).value
        details = {"n": n, "exact": exact}
        worst = 0.0
        for method in (EstimatorMethod.naive, EstimatorMethod.quenched_cond, EstimatorMethod.tilted_is):
            est = estimate_survival(self.env, self.solution, n, self.options.reps, method, self.options.seed, self.options.workers)
            z = est.z_score(exact)
            details[method.value] = {"value": est.value, "stderr": est.stderr, "z": z}
            worst = max(worst, abs(z))
        return CheckResult(
            name="survival-anchor",
            status=_verdict(worst <= 3.0),
            message=f"largest |z| of three survival estimators against exact n={n}: {worst:.2f}",
            statistic=worst,
            threshold=3.0,
            details=details,
        )

    # ─────────────────────────────────────────────────────────────────
    # SURVIVAL RATIO AND SCALING
    # ─────────────────────────────────────────────────────────────────

    def check_theorem1(self) -> List[CheckResult]:
        o = self.options
        table, constants = theorem1_ratio(self.env, self.solution, o.theorem1_ns, o.reps, o.seed, o.workers, threshold=o.stabilization_threshold)
        self._table(table)
        results = [
            CheckResult(
                name="theorem1-stabilization",
                status=_verdict(table.passed() and constants.positive()),
                message=f"|r_{table.ns[-1]}/r_{table.ns[-2]} - 1| = {table.stabilization():.4f}, kappa = {constants.kappa:.6g}",
                statistic=table.stabilization(),
                threshold=table.threshold,
                bars=table.stabilization_stderr(),
                details=constants.to_dict(),
            )
        ]
        n = self._anchor_n()
        if n is not None:
            exact = exact_ratio(self.env, n).value
            small, _ = theorem1_ratio(self.env, self.solution, [n], o.reps, o.seed, o.workers)
            row = small.last
            results.append(CheckResult(
                name="theorem1-anchor",
                status=_verdict(_within(row.statistic, exact, 3.0 * row.stderr + 1e-12)),
                message=f"r_{n} = {row.statistic:.6g} vs exact {exact:.6g}",
                statistic=row.statistic,
                threshold=exact,
                bars=3.0 * row.stderr,
            ))
        return results

    def check_corollary(self) -> List[CheckResult]:
        o = self.options
        scan = survival_scan(self.env, self.solution, o.theorem1_ns, o.reps, o.seed, o.workers)
        table, constants = corollary_scaling(self.env, self.solution, self.stable, o.theorem1_ns, o.reps, o.seed, o.workers, scan=scan, threshold=o.scaling_threshold)
        _, t1 = theorem1_ratio(self.env, self.solution, o.theorem1_ns, o.reps, o.seed, o.workers, scan=scan)
        walk = walk_scaling(self.env, self.solution, self.stable, o.theorem1_ns, o.reps, o.seed, o.workers)
        self._table(table)
        self._table(walk)
        lattice = "lattice: ratio-only" in table.notes
        consistency = kappa_consistency(t1, constants, walk)
        return [
            CheckResult(
                name="corollary-scaling",
                status=_verdict(table.passed()),
                message=f"|c_{table.ns[-1]}/c_{table.ns[-2]} - 1| = {table.stabilization():.4f}" + (" (lattice, ratio-only)" if lattice else ""),
                statistic=table.stabilization(),
                threshold=table.threshold,
                bars=table.stabilization_stderr(),
                details=constants.to_dict(),
            ),
            CheckResult(
                name="kappa-consistency",
                status=CheckStatus.SKIPPED if lattice else _verdict(consistency["passed"]),
                message=f"kappa'/kappa = {consistency['quotient']:.6g} vs walk scaling {consistency['walk_limit']:.6g}",
                statistic=consistency["gap"],
                bars=consistency["bar"],
                details=consistency,
            ),
        ]

    # ─────────────────────────────────────────────────────────────────
    # CONDITIONAL LAW AND FLAT PATHS
    # ─────────────────────────────────────────────────────────────────

    def check_theorem2(self) -> List[CheckResult]:
        o = self.options
        result = theorem2_conditional(self.env, self.solution, o.theorem2_ns, o.reps, o.seed, o.moment_order, o.workers)
        self._table(result.moments)
        first, last = result.tv_pairs[0], result.tv_pairs[-1]
        results = [
            CheckResult(
                name="theorem2-tv",
                status=_verdict(result.tv_decreasing()),
                message=f"TV({last['n']},{last['m']}) = {last['tv']:.4f} vs TV({first['n']},{first['m']}) = {first['tv']:.4f}",
                statistic=last["tv"],
                threshold=first["tv"],
                details=result.to_dict(),
            ),
            CheckResult(
                name="theorem2-moment",
                status=_verdict(result.moment_bounded()),
                message=f"max E[Z^{result.theta:.3g}] = {max(r.statistic for r in result.moments.rows):.4g}",
                statistic=max(r.statistic for r in result.moments.rows),
                threshold=2.0 * result.moments.rows[0].statistic,
            ),
        ]
        results.append(self._theorem2_anchor())
        return results

    def _theorem2_anchor(self) -> CheckResult:
        from branching.estimators import conditioned_population

        o = self.options
        n = o.anchor_n
        method = "linear-fractional" if self.env.is_all_geometric() else "kernel"
        try:
            exact = exact_conditional_pmf(self.env, n, method=method, tail_limit=1.0)
        except SizeLimit as e:
            return CheckResult(name="theorem2-anchor", status=CheckStatus.SKIPPED, message=f"no exact conditional law at n={n}: {e}")
        zmax = exact.details["zmax"]
        tail = exact.details["tail_conditional"]
        if tail > o.anchor_tv:
            return CheckResult(
                name="theorem2-anchor",
                status=CheckStatus.SKIPPED,
                message=f"exact law at n={n} leaves {tail:.3e} of its mass above zmax={zmax}",
            )
        sample = conditioned_population(self.env, self.solution, n, o.reps, o.seed, o.workers)
        # states above zmax compared as one lumped state
        tv = tv_distance(coarsen_pmf(sample.pmf(), zmax), coarsen_pmf(pmf_from_result(exact), zmax))
        return CheckResult(
            name="theorem2-anchor",
            status=_verdict(tv <= o.anchor_tv),
            message=f"TV(weighted pmf, exact {method}) at n={n}: {tv:.4f}",
            statistic=tv,
            threshold=o.anchor_tv,
            details={"excluded_mass": sample.excluded_mass(), "tail_conditional": tail, "zmax": zmax, "method": method},
        )

    def check_theorem3(self) -> List[CheckResult]:
        o = self.options
        result = theorem3_flatness(self.env, self.solution, o.theorem3_ns, o.reps, o.seed, RRule(o.r_exponent), o.workers)
        self._table(result.medians)
        last_n = result.medians.last.n
        return [
            CheckResult(
                name="theorem3-flatness",
                status=_verdict(result.medians_decreasing()),
                message=f"median D_n/Y_r: {[round(r.statistic, 4) for r in result.medians.rows]}",
                statistic=result.medians.last.statistic,
                details=result.to_dict(),
            ),
            CheckResult(
                name="theorem3-w-positive",
                status=_verdict(result.w_positive()),
                message=f"P{{Y_mid < 1e-3}} at n={last_n}: {result.small_w[last_n]:.4f}",
                statistic=result.small_w[last_n],
                threshold=0.05,
            ),
        ]

    # ─────────────────────────────────────────────────────────────────
    # WALK LIMITS
    # ─────────────────────────────────────────────────────────────────

    def _walk_limit_results(self, tables: List[ConvergenceTable], xs: Sequence[float], start_table, prefix: str) -> List[CheckResult]:
        o = self.options
        lattice = self.env.is_lattice()
        results: List[CheckResult] = []
        for x, table in zip(xs, tables):
            self._table(table)
            results.append(CheckResult(
                name=f"{prefix}-stabilization-x={x:g}",
                status=_verdict(table.stabilization() <= o.scaling_threshold),
                message=f"stabilization {table.stabilization():.4f}",
                statistic=table.stabilization(),
                threshold=o.scaling_threshold,
                bars=table.stabilization_stderr(),
            ))
            gap = table.reference_gap()
            results.append(CheckResult(
                name=f"{prefix}-level-x={x:g}",
                status=CheckStatus.SKIPPED if lattice else _verdict(gap is not None and abs(gap) <= 1.0),
                message=f"{table.last.statistic:.6g} vs limit {table.reference:.6g}" + (" (lattice, not asserted)" if lattice else ""),
                statistic=table.last.statistic,
                threshold=table.reference,
                bars=3.0 * table.last.stderr + table.reference_bar,
            ))
        if len(tables) >= 2:
            dep = x_dependence(tables, start_table, xs)
            results.append(CheckResult(
                name=f"{prefix}-x-dependence",
                status=_verdict(dep["passed"]),
                message=f"ratio {dep['observed']:.4g} vs {start_table.side.value}-ratio {dep['expected']:.4g}",
                statistic=dep["observed"],
                threshold=dep["expected"],
                bars=dep["bar"],
            ))
        return results

    def check_prop21(self) -> List[CheckResult]:
        o = self.options
        reps = o.renewal_reps or o.reps
        xmax = max(o.renewal_xmax, max(abs(x) for x in o.prop21_xs))
        u_table = build_renewal_table(self.tilted, RenewalSide.u, xmax, reps, o.seed, o.renewal_K, o.renewal_method, workers=o.workers)
        v_table = build_renewal_table(self.tilted, RenewalSide.v, xmax, reps, o.seed, o.renewal_K, o.renewal_method, workers=o.workers)
        pos_xs = tuple(abs(x) for x in o.prop21_xs)
        neg_xs = tuple(0.0 - abs(x) for x in o.prop21_xs)
        pos = prop21_table(self.tilted, self.stable, o.theta, pos_xs, o.prop21_ns, o.reps, o.seed, u_table, v_table, workers=o.workers)
        neg = prop21_table(self.tilted, self.stable, o.theta, neg_xs, o.prop21_ns, o.reps, o.seed, u_table, v_table, side=RenewalSide.v, workers=o.workers)
        results = self._walk_limit_results(pos, pos_xs, u_table, "prop21")
        results += self._walk_limit_results(neg, neg_xs, v_table, "prop21-neg")

        lattice = self.env.is_lattice()
        ratios = conditional_ratio_tables(self.tilted, o.theta, RATIO_TEST_FUNCTION, o.prop21_ns, o.reps, o.seed, u_table, v_table, workers=o.workers)
        for table in ratios:
            self._table(table)
            gap = table.reference_gap()
            results.append(CheckResult(
                name=table.name,
                status=CheckStatus.SKIPPED if lattice else _verdict(gap is not None and abs(gap) <= 1.0),
                message=f"{table.last.statistic:.6g} vs boundary-law mean {table.reference:.6g}" + (" (lattice, not asserted)" if lattice else ""),
                statistic=table.last.statistic,
                threshold=table.reference,
                bars=3.0 * table.last.stderr + table.reference_bar,
            ))

        first_min = first_min_identity(self.env, self.solution, o.theorem1_ns, o.reps, o.seed, o.workers)
        self._table(first_min)
        results.append(CheckResult(
            name="first-min-identity",
            status=_verdict(first_min.passed()),
            message=f"stabilization {first_min.stabilization():.4f}",
            statistic=first_min.stabilization(),
            threshold=first_min.threshold,
        ))
        return results

    # ─────────────────────────────────────────────────────────────────
    # ORCHESTRATION
    # ─────────────────────────────────────────────────────────────────

    def checks_for(self, suite: str) -> List[Callable[[], Any]]:
        table = {
            "basics": [self.check_tilt, self.check_change_of_measure, self.check_duality, self.check_baxter, self.check_moment_law, self.check_lemmas, self.check_survival_anchor],
            "theorem1": [self.check_theorem1],
            "corollary": [self.check_corollary],
            "theorem2": [self.check_theorem2],
            "theorem3": [self.check_theorem3],
            "prop21": [self.check_prop21],
        }
        if suite not in table:
            raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)} or all")
        return table[suite]

    @staticmethod
    def _guard(check: Callable[[], Any]) -> List[CheckResult]:
        name = check.__name__.replace("check_", "").replace("_", "-")
        start = time.time()
        try:
            out = check()
        except (BPREError, ValueError, ArithmeticError) as e:
            logger.error(f"Check {name} failed with {type(e).__name__}: {e}")
            return [CheckResult(name=name, status=CheckStatus.ERROR, message=f"{type(e).__name__}: {e}")]
        results = out if isinstance(out, list) else [out]
        logger.info(f"Check {name}: {[r.status.value for r in results]} in {time.time() - start:.1f}s")
        return results

    async def run_suite(self, suites: Sequence[str]) -> SuiteReport:
        """Run every check of the requested suites and return a SuiteReport"""
        names = list(SUITES) if "all" in suites else list(dict.fromkeys(suites))
        logger.info(f"Starting verification: {', '.join(names)}")
        start = time.time()
        loop = asyncio.get_running_loop()
        futures = [loop.run_in_executor(None, self._guard, check) for suite in names for check in self.checks_for(suite)]
        report = SuiteReport(suites=names)
        for results in await asyncio.gather(*futures):
            report.checks.extend(results)
        report.tables = dict(self.tables)
        report.elapsed = time.time() - start
        report.finalize()
        logger.info(f"Verification complete: {report.overall_status.value} in {report.elapsed:.1f}s")
        if report.failures:
            logger.warning(f"Failures: {report.failures}")
        return report


async def run_verification(env: EnvironmentLaw, suites: Sequence[str], options: Optional[SuiteOptions] = None) -> SuiteReport:
    """Convenience wrapper: build a SuiteRunner and run the suites"""
    return await SuiteRunner(env, options).run_suite(suites)


def run_verification_sync(env: EnvironmentLaw, suites: Sequence[str], options: Optional[SuiteOptions] = None) -> SuiteReport:
    return asyncio.run(run_verification(env, suites, options))
