"""
Command-line entry point

Weakly subcritical BPRE simulator - estimators, exact oracles and the
limit-theorem verification suites.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage error,
3 runtime error. A manifest is written for every run that got past
argument parsing.
"""
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import asyncio
import logging
import sys
import time

from branching.estimators import estimate_survival
from config import settings
from environment.env_law import EnvironmentLaw, assumption_report, load_environment
from errors import BPREError, EnvironmentConfigError, UsageError
from harness.limit_harness import RRule, theorem2_conditional, theorem3_flatness
from harness.tables import ConvergenceTable
from harness.verdicts import CheckResult, CheckStatus, SuiteOptions, SuiteRunner
from models import RenewalSide
from montecarlo.streams import ledger
from oracle.enumeration import (
    TAIL_MASS_LIMIT,
    exact_conditional_pmf,
    exact_prob_min_nonneg,
    exact_ratio,
    exact_renewal,
    exact_survival,
)
from randwalk.renewal import build_renewal_table, harmonic_check, subadditivity_check
from reporting.manifest import RunManifest
from reporting.output import convergence_csv, pmf_csv, renewal_csv, result_digest, write_json, write_tables, write_text
from reporting.run_config import Command, OracleQuantity, OutputFormat, RunConfig, parse_config
from tilting.tilt import StableNorm, solve_beta, tilted_env

logger = logging.getLogger(__name__)

# (JSON payload, named CSV tables, verdicts)
Outcome = Tuple[Dict[str, Any], Dict[str, str], List[CheckResult]]


def _flag(name: str, passed: bool, message: str) -> CheckResult:
    return CheckResult(name=name, status=CheckStatus.PASS if passed else CheckStatus.FAIL, message=message)


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def cmd_solve_beta(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    solution = solve_beta(env)
    stable = StableNorm.from_solution(solution)
    payload = {
        "environment": env.describe(),
        "solution": solution.to_dict(),
        "stable_norm": stable.model_dump(),
        "tilted_env": tilted_env(env, solution).to_config(),
        "lattice_span": env.lattice_span(),
        "assumptions": assumption_report(env).to_dict(),
    }
    return payload, {}, []


def cmd_renewal(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    tilted = tilted_env(env, solve_beta(env))
    table = build_renewal_table(
        tilted, config.side, config.xmax, config.reps, config.seed,
        K=config.K, method=config.renewal_method, step=config.step, workers=config.workers,
    )
    sign = 1.0 if config.side == RenewalSide.u else -1.0
    harmonic = [harmonic_check(tilted, sign * x, table).to_dict() for x in (0.0, config.xmax / 4.0, config.xmax / 2.0)]
    payload = {
        "table": table.to_dict(),
        "subadditivity": subadditivity_check(table),
        "harmonic": harmonic,
    }
    return payload, {f"renewal-{config.side.value}": renewal_csv(table.to_rows())}, []


def cmd_estimate_survival(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    """One flat Estimate for --n, a convergence table for --n-list"""
    solution = solve_beta(env)
    table = ConvergenceTable(name=f"survival-{config.method.value}", threshold=settings.STABILIZATION_THRESHOLD)
    ns = (config.survival_n,) if config.survival_n is not None else config.ns
    estimates = []
    for n in ns:
        estimate = estimate_survival(env, solution, n, config.reps, config.method, config.seed, config.workers)
        table.add(n, estimate.value, estimate.stderr)
        estimates.append(estimate)
    tables = {table.name: convergence_csv(table)}
    if config.survival_n is not None:
        return estimates[0].to_dict(), tables, []
    return {"table": table.to_dict(), "estimates": [{"n": n, **e.to_dict()} for n, e in zip(ns, estimates)]}, tables, []


def cmd_oracle(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    q = config.quantity
    if q == OracleQuantity.survival:
        result = exact_survival(env, config.n, workers=config.workers)
    elif q == OracleQuantity.ratio:
        result = exact_ratio(env, config.n)
    elif q == OracleQuantity.prob_min_nonneg:
        result = exact_prob_min_nonneg(env, config.n)
    elif q == OracleQuantity.conditional_pmf:
        method = "linear-fractional" if env.is_all_geometric() and config.n > 0 else "kernel"
        # the closed-form tail is exact, so it is reported rather than raised
        limit = 1.0 if method == "linear-fractional" else TAIL_MASS_LIMIT
        result = exact_conditional_pmf(env, config.n, method=method, tail_limit=limit)
    else:
        side = RenewalSide.u if q == OracleQuantity.renewal_u else RenewalSide.v
        result = exact_renewal(tilted_env(env, solve_beta(env)), side, config.x, config.K)
    return result.to_dict(), {}, []


def cmd_verify(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    options = SuiteOptions(
        reps=config.reps,
        seed=config.seed,
        workers=config.workers,
        theta=config.theta or 1.0,
        prop21_xs=config.xs,
        r_exponent=config.r_exponent,
        stabilization_threshold=config.stabilization_threshold,
        scaling_threshold=config.scaling_threshold,
        renewal_method=config.renewal_method,
        renewal_K=config.K,
        renewal_xmax=config.xmax,
    )
    report = asyncio.run(SuiteRunner(env, options).run_suite(config.suites))
    tables = {name: convergence_csv(t) for name, t in report.tables.items()}
    return report.to_dict(), tables, report.checks


def cmd_conditional_law(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    solution = solve_beta(env)
    result = theorem2_conditional(env, solution, config.ns, config.reps, config.seed, config.theta, config.workers)
    payload = {**result.to_dict(), "pmfs": {str(n): {str(z): p for z, p in pmf.items()} for n, pmf in result.pmfs.items()}}
    tables = {"conditional-pmf": pmf_csv(result.pmfs), result.moments.name: convergence_csv(result.moments)}
    verdicts = [
        _flag("tv-decreasing", result.tv_decreasing(), f"TV pairs {[round(p['tv'], 4) for p in result.tv_pairs]}"),
        _flag("moment-bounded", result.moment_bounded(), f"E[Z^{result.theta:.3g}] {[round(r.statistic, 4) for r in result.moments.rows]}"),
    ]
    return payload, tables, verdicts


def cmd_flatness(config: RunConfig, env: EnvironmentLaw) -> Outcome:
    solution = solve_beta(env)
    result = theorem3_flatness(env, solution, config.ns, config.reps, config.seed, RRule(config.r_exponent), config.workers)
    verdicts = [
        _flag("medians-decreasing", result.medians_decreasing(), f"medians {[round(r.statistic, 4) for r in result.medians.rows]}"),
        _flag("w-positive", result.w_positive(), f"P{{Y_mid < 1e-3}} = {result.small_w[result.medians.last.n]:.4f}"),
    ]
    return result.to_dict(), {result.medians.name: convergence_csv(result.medians)}, verdicts


COMMANDS: Dict[Command, Callable[[RunConfig, EnvironmentLaw], Outcome]] = {
    Command.solve_beta: cmd_solve_beta,
    Command.renewal: cmd_renewal,
    Command.estimate_survival: cmd_estimate_survival,
    Command.oracle: cmd_oracle,
    Command.verify: cmd_verify,
    Command.conditional_law: cmd_conditional_law,
    Command.flatness: cmd_flatness,
}


# =============================================================================
# RUN
# =============================================================================

def _write_outputs(config: RunConfig, payload: Dict[str, Any], tables: Dict[str, str]) -> List[str]:
    if config.format == OutputFormat.json:
        path = write_json(payload, config.out)
        return [str(path)] if path else []
    if config.multi_table:
        return [str(p) for p in write_tables(tables, config.out)]
    (text,) = tables.values()
    path = write_text(text, config.out)
    return [str(path)] if path else []


def run(config: RunConfig) -> int:
    """Execute one configured run; the manifest is written whatever happens"""
    settings.BLOCK_SIZE = config.block_size
    settings.WORKERS = config.workers
    ledger.clear()
    manifest = RunManifest(config=config.echo())
    start = time.time()
    code, error = 0, None
    try:
        env = load_environment(config.env)
        logger.info(f"{config.command.value} on {env.describe()} (seed {config.seed}, {config.workers} worker(s))")
        payload, tables, verdicts = COMMANDS[config.command](config, env)
        manifest.outputs = _write_outputs(config, payload, tables)
        manifest.result_digest = result_digest(payload, tables)
        manifest.verdicts = [v.to_dict() for v in verdicts]
        if any(v.status == CheckStatus.ERROR for v in verdicts):
            code = 3
        elif any(v.status == CheckStatus.FAIL for v in verdicts):
            code = 1
    except (UsageError, EnvironmentConfigError) as e:
        code, error = 2, str(e)
        logger.error(f"Usage error: {e}")
    except (BPREError, ValueError, ArithmeticError) as e:
        code, error = 3, f"{type(e).__name__}: {e}"
        logger.error(f"Run failed: {error}")
    finally:
        manifest.finish(code, time.time() - start, error)
        manifest.write(config.manifest_path())
    logger.info(f"Finished {config.command.value} with exit code {code} in {time.time() - start:.1f}s")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, settings.BPRE_LOG.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = parse_config(argv)
    except UsageError as e:
        print(f"bpre: error: {e}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
