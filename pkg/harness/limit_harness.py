"""
Limit Harness - desk-scale tables for the survival asymptotics

Every routine returns ConvergenceTables (or a small result record built
from them); verdicts are assigned in harness.verdicts.

Survival-type statistics share tilted environment draws per n:

    A = e^{-beta S_n} q_n,   B = e^{-beta S_n} 1{L_n >= 0}

so P{Z_n > 0} = gamma^n E_tilted[A], P{L_n >= 0} = gamma^n E_tilted[B] and
their ratio needs no gamma^n at all.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence
import logging
import math
import warnings

import numpy as np

from branching.estimators import conditioned_population
from branching.quenched import log_survival_batch, walk_from_atoms
from config import settings
from environment.env_law import EnvironmentLaw
from errors import LatticeWarning
from harness.tables import ConvergenceTable, LimitConstants
from models import RenewalSide
from montecarlo.stats import ratio_from_sums, tv_distance, weighted_quantile
from montecarlo.streams import MomentSums, run_blocks
from randwalk.conditioned import prob_min_nonneg, prop_pr2_check, prop_pr2_check_neg
from randwalk.renewal import RenewalTable, boundary_law
from randwalk.walk import ExpMaxNeg, ExpMinNonneg, GridFunction, first_min_at_end, min_nonneg, partial_sums
from tilting.tilt import StableNorm, TiltSolution, tilted_env

logger = logging.getLogger(__name__)

FLATNESS_EPS = 1e-12
W_DELTA = 1e-3


def _check_ns(ns: Sequence[int]) -> List[int]:
    ns = [int(n) for n in ns]
    if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError(f"n-list must be positive and strictly increasing, got {ns}")
    return ns


def _lattice_guard(env: EnvironmentLaw, what: str, table: ConvergenceTable) -> None:
    if env.is_lattice():
        message = f"{what}: lattice environment (span {env.lattice_span()}), density constant not asserted; ratio-only"
        warnings.warn(message, LatticeWarning)
        logger.warning(message)
        table.notes.append("lattice: ratio-only")


# =============================================================================
# SURVIVAL SCAN: RATIO AND SCALING
# =============================================================================

def _survival_walk_kernel(rng: np.random.Generator, size: int, tilted: EnvironmentLaw, n: int, beta: float):
    atoms = tilted.sample_matrix(size, n, rng)
    walks = walk_from_atoms(tilted, atoms)
    damp = -beta * walks[:, -1]
    a = np.exp(damp + log_survival_batch(tilted, atoms))
    b = np.where(min_nonneg(walks), np.exp(damp), 0.0)
    return MomentSums.from_samples(np.column_stack([a, b]))


@dataclass
class SurvivalScan:
    """Per-n moment sums of (A, B) on shared tilted environments"""
    solution: TiltSolution
    sums: Dict[int, MomentSums] = field(default_factory=dict)

    def tilted_survival(self, n: int):
        s = self.sums[n]
        return float(s.mean()[0]), float(s.stderr()[0])

    def tilted_walk(self, n: int):
        s = self.sums[n]
        return float(s.mean()[1]), float(s.stderr()[1])

    def ratio(self, n: int):
        return ratio_from_sums(self.sums[n], 0, 1)


def survival_scan(
    env: EnvironmentLaw,
    solution: TiltSolution,
    ns: Sequence[int],
    reps: int,
    seed: int,
    workers: Optional[int] = None,
) -> SurvivalScan:
    ns = _check_ns(ns)
    tilted = tilted_env(env, solution)
    scan = SurvivalScan(solution=solution)
    for n in ns:
        blocks = run_blocks(_survival_walk_kernel, f"survival-scan-{n}", reps, seed, workers, tilted=tilted, n=n, beta=solution.beta)
        scan.sums[n] = MomentSums.reduce(blocks)
    return scan


def theorem1_ratio(
    env: EnvironmentLaw,
    solution: TiltSolution,
    ns: Sequence[int],
    reps: int,
    seed: int,
    workers: Optional[int] = None,
    scan: Optional[SurvivalScan] = None,
    threshold: Optional[float] = None,
):
    """
    r_n = P{Z_n > 0} / P{L_n >= 0} across n.

    Returns:
        (ConvergenceTable, LimitConstants) with kappa = r at the largest n
    """
    ns = _check_ns(ns)
    scan = scan or survival_scan(env, solution, ns, reps, seed, workers)
    table = ConvergenceTable(name="theorem1-ratio", threshold=settings.STABILIZATION_THRESHOLD if threshold is None else threshold)
    for n in ns:
        ratio, stderr = scan.ratio(n)
        table.add(n, ratio, stderr if math.isfinite(stderr) else 0.0)
    constants = LimitConstants(kappa=table.last.statistic, kappa_stderr=table.last.stderr)
    logger.info(f"Survival ratio: kappa ~ {constants.kappa:.6g} +- {constants.kappa_stderr:.2g}, stabilization {table.stabilization():.3g}")
    return table, constants


def corollary_scaling(
    env: EnvironmentLaw,
    solution: TiltSolution,
    stable: StableNorm,
    ns: Sequence[int],
    reps: int,
    seed: int,
    workers: Optional[int] = None,
    scan: Optional[SurvivalScan] = None,
    threshold: Optional[float] = None,
):
    """
    c_n = P{Z_n > 0} n a_n gamma^{-n}, evaluated as E_tilted[A] n a_n so no
    power of gamma is ever formed.

    Returns:
        (ConvergenceTable, LimitConstants) with kappa' = c at the largest n
    """
    ns = _check_ns(ns)
    table = ConvergenceTable(name="corollary-scaling", threshold=settings.SCALING_THRESHOLD if threshold is None else threshold)
    _lattice_guard(env, "corollary scaling", table)
    scan = scan or survival_scan(env, solution, ns, reps, seed, workers)
    for n in ns:
        mean, stderr = scan.tilted_survival(n)
        factor = n * float(stable.a_n(n))
        table.add(n, mean * factor, stderr * factor, log_survival=(math.log(mean) if mean > 0 else -math.inf) + n * solution.log_gamma)
    constants = LimitConstants(kappa_prime=table.last.statistic, kappa_prime_stderr=table.last.stderr)
    return table, constants


def walk_scaling(
    env: EnvironmentLaw,
    solution: TiltSolution,
    stable: StableNorm,
    ns: Sequence[int],
    reps: int,
    seed: int,
    workers: Optional[int] = None,
) -> ConvergenceTable:
    """P{L_n >= 0} n a_n gamma^{-n} from independent prob_min_nonneg runs"""
    ns = _check_ns(ns)
    tilted = tilted_env(env, solution)
    table = ConvergenceTable(name="walk-scaling", threshold=settings.SCALING_THRESHOLD)
    for n in ns:
        estimate = prob_min_nonneg(tilted, solution, n, reps, seed, workers)
        factor = n * float(stable.a_n(n))
        table.add(n, estimate.details["tilted_mean"] * factor, estimate.details["tilted_stderr"] * factor)
    return table


def kappa_consistency(ratio: LimitConstants, scaling: LimitConstants, walk: ConvergenceTable) -> Dict[str, Any]:
    """kappa'/kappa against the stabilized walk scaling, in units of combined 3-sigma bars"""
    quotient = scaling.kappa_prime / ratio.kappa
    rel = math.sqrt((scaling.kappa_prime_stderr / scaling.kappa_prime) ** 2 + (ratio.kappa_stderr / ratio.kappa) ** 2)
    bar = 3.0 * (abs(quotient) * rel + walk.last.stderr)
    gap = quotient - walk.last.statistic
    return {"quotient": quotient, "walk_limit": walk.last.statistic, "gap": gap, "bar": bar, "passed": abs(gap) <= bar}


# =============================================================================
# CONDITIONAL LAW OF Z_n
# =============================================================================

@dataclass
class ConditionalLawResult:
    theta: float
    pmfs: Dict[int, Dict[int, float]]
    tv_pairs: List[Dict[str, float]]
    moments: ConvergenceTable
    ess: Dict[int, float]

    def tv_decreasing(self) -> bool:
        """TV at the last pair strictly below TV at the first pair"""
        if len(self.tv_pairs) < 2:
            return False
        return self.tv_pairs[-1]["tv"] < self.tv_pairs[0]["tv"]

    def moment_bounded(self, factor: float = 2.0) -> bool:
        values = [r.statistic for r in self.moments.rows]
        return max(values) <= factor * values[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "tv_pairs": self.tv_pairs,
            "moments": self.moments.to_dict(),
            "ess": {str(k): v for k, v in self.ess.items()},
            "tv_decreasing": self.tv_decreasing(),
            "moment_bounded": self.moment_bounded(),
        }


def theorem2_conditional(
    env: EnvironmentLaw,
    solution: TiltSolution,
    ns: Sequence[int],
    reps: int,
    seed: int,
    theta: Optional[float] = None,
    workers: Optional[int] = None,
) -> ConditionalLawResult:
    """
    Weighted laws of Z_n given Z_n > 0 along the n-list, TV distances
    between consecutive entries and the moments E[Z_n^theta | Z_n > 0].
    """
    ns = _check_ns(ns)
    theta = solution.beta / 2.0 if theta is None else theta
    if not 0.0 < theta < solution.beta:
        raise ValueError(f"moment order must lie in (0, beta={solution.beta:.6g}), got {theta}")
    pmfs: Dict[int, Dict[int, float]] = {}
    ess: Dict[int, float] = {}
    moments = ConvergenceTable(name="theorem2-moment", threshold=settings.STABILIZATION_THRESHOLD)
    for n in ns:
        sample = conditioned_population(env, solution, n, reps, seed, workers)
        pmfs[n] = sample.pmf()
        ess[n] = sample.ess()
        w = sample.weights()
        values = sample.final.astype(float) ** theta
        mean = float(np.sum(w * values) / np.sum(w))
        stderr = float(math.sqrt(np.sum(w * w * (values - mean) ** 2)) / np.sum(w))
        moments.add(n, mean, stderr, excluded_mass=sample.excluded_mass())
    tv_pairs = [
        {"n": a, "m": b, "tv": tv_distance(pmfs[a], pmfs[b])}
        for a, b in zip(ns, ns[1:])
    ]
    logger.info(f"Conditional law: TV pairs {[round(p['tv'], 4) for p in tv_pairs]}")
    return ConditionalLawResult(theta=theta, pmfs=pmfs, tv_pairs=tv_pairs, moments=moments, ess=ess)


# =============================================================================
# FLAT PATHS
# =============================================================================

@dataclass(frozen=True)
class RRule:
    """r_n = ceil(n^exponent), required to satisfy 1 <= r_n < n/2"""
    exponent: float = 0.25

    def __call__(self, n: int) -> int:
        r = max(1, math.ceil(n ** self.exponent))
        if not r < n / 2:
            raise ValueError(f"r_n = {r} not below n/2 for n = {n}")
        return r


@dataclass(frozen=True)
class FlatnessSummary:
    """
    Per-path statistics of Y_k = e^{-S_k} Z_k on k in [r, n - r]:
    relative sup-deviation from Y_r and the midpoint value.
    """
    r: int

    def __call__(self, sums: np.ndarray, sizes: np.ndarray) -> Dict[str, np.ndarray]:
        n = sums.shape[1] - 1
        window = slice(self.r, n - self.r + 1)
        y = sizes[:, window] * np.exp(-sums[:, window])
        start = y[:, 0]
        deviation = np.abs(y - start[:, None]).max(axis=1)
        mid = self.r + (n - 2 * self.r) // 2
        y_half = sizes[:, mid] * np.exp(-sums[:, mid])
        return {
            "relative_flatness": deviation / np.maximum(start, FLATNESS_EPS),
            "y_start": start,
            "y_half": y_half,
        }


@dataclass
class FlatnessResult:
    medians: ConvergenceTable
    upper: Dict[int, float]
    small_w: Dict[int, float]
    large_w: Dict[int, float]
    excluded: Dict[int, Dict[str, Any]]

    def medians_decreasing(self) -> bool:
        values = [r.statistic for r in self.medians.rows]
        return all(b < a for a, b in zip(values, values[1:]))

    def w_positive(self, limit: float = 0.05) -> bool:
        return self.small_w[self.medians.last.n] <= limit

    def to_dict(self) -> Dict[str, Any]:
        return {
            "medians": self.medians.to_dict(),
            "q90": {str(k): v for k, v in self.upper.items()},
            "p_small_w": {str(k): v for k, v in self.small_w.items()},
            "p_large_w": {str(k): v for k, v in self.large_w.items()},
            "excluded": {str(k): v for k, v in self.excluded.items()},
            "medians_decreasing": self.medians_decreasing(),
            "w_positive": self.w_positive(),
        }


def theorem3_flatness(
    env: EnvironmentLaw,
    solution: TiltSolution,
    ns: Sequence[int],
    reps: int,
    seed: int,
    r_rule: Optional[RRule] = None,
    workers: Optional[int] = None,
    delta: float = W_DELTA,
) -> FlatnessResult:
    """
    Weighted quantiles of D_n / Y_r along the n-list and the W diagnostics
    P{Y_mid < delta}, P{Y_mid > 1/delta} on survival-conditioned paths.
    """
    ns = _check_ns(ns)
    r_rule = r_rule or RRule()
    medians = ConvergenceTable(name="theorem3-median-flatness", threshold=settings.STABILIZATION_THRESHOLD)
    result = FlatnessResult(medians=medians, upper={}, small_w={}, large_w={}, excluded={})
    for n in ns:
        r = r_rule(n)
        sample = conditioned_population(env, solution, n, reps, seed, workers, summary=FlatnessSummary(r))
        w = sample.weights()
        rel = sample.summaries["relative_flatness"]
        q50, q90 = weighted_quantile(rel, w, [0.5, 0.9])
        y_half = sample.summaries["y_half"]
        total = float(np.sum(w))
        # one-sigma order-statistic band around the median
        ess = max(sample.ess(), 1.0)
        h = 0.5 / math.sqrt(ess)
        lo, hi = weighted_quantile(rel, w, [max(0.0, 0.5 - h), min(1.0, 0.5 + h)])
        medians.add(n, float(q50), float(hi - lo) / 2.0, r=r, ess=ess)
        result.upper[n] = float(q90)
        result.small_w[n] = float(np.sum(w[y_half < delta]) / total)
        result.large_w[n] = float(np.sum(w[y_half > 1.0 / delta]) / total)
        result.excluded[n] = {"censored": sample.censored, "excluded_mass": sample.excluded_mass()}
    logger.info(f"Flatness: medians {[round(r.statistic, 4) for r in medians.rows]}")
    return result


# =============================================================================
# WALK LIMITS UNDER THE TILTED LAW
# =============================================================================

def _walk_limit_kernel(rng: np.random.Generator, size: int, tilted: EnvironmentLaw, n: int, start: float, theta: float, side: RenewalSide):
    sums = partial_sums(tilted.log_means()[tilted.sample_matrix(size, n, rng)], start)
    functional = ExpMinNonneg(theta) if side == RenewalSide.u else ExpMaxNeg(theta)
    return MomentSums.from_samples(functional(sums))


def prop21_table(
    tilted: EnvironmentLaw,
    stable: StableNorm,
    theta: float,
    xs: Sequence[float],
    ns: Sequence[int],
    reps: int,
    seed: int,
    u_table: RenewalTable,
    v_table: RenewalTable,
    side: RenewalSide = RenewalSide.u,
    workers: Optional[int] = None,
) -> List[ConvergenceTable]:
    """
    n a_n E_x[e^{-theta S_n}; L_n >= 0] against s0 u(x) int e^{-theta z} v(-z) dz
    (side u, x >= 0), or n a_n E_x[e^{theta S_n}; M_n < 0] against
    s0 v(x) int e^{-theta z} u(z) dz (side v, x <= 0); one table per x.
    """
    ns = _check_ns(ns)
    if theta <= 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    start_table, boundary_table = (u_table, v_table) if side == RenewalSide.u else (v_table, u_table)
    boundary = boundary_law(boundary_table, theta)
    tables: List[ConvergenceTable] = []
    for x in xs:
        table = ConvergenceTable(name=f"prop21-{side.value}-x={x:g}", threshold=settings.SCALING_THRESHOLD)
        _lattice_guard(tilted, "prop21", table)
        level = float(start_table(x))
        level_bar = float(start_table.uncertainty(x))
        table.reference = stable.s0 * level * boundary.inverse_normalizer
        table.reference_bar = stable.s0 * (level * boundary.inverse_normalizer_bar + level_bar * boundary.inverse_normalizer)
        for n in ns:
            sums = MomentSums.reduce(run_blocks(
                _walk_limit_kernel, f"prop21-{side.value}-{x:g}-{n}", reps, seed, workers,
                tilted=tilted, n=n, start=float(x), theta=theta, side=side,
            ))
            factor = n * float(stable.a_n(n))
            table.add(n, float(sums.mean()[0]) * factor, float(sums.stderr()[0]) * factor)
        tables.append(table)
    return tables


def conditional_ratio_tables(
    tilted: EnvironmentLaw,
    theta: float,
    phi: GridFunction,
    ns: Sequence[int],
    reps: int,
    seed: int,
    u_table: RenewalTable,
    v_table: RenewalTable,
    start: float = 0.0,
    workers: Optional[int] = None,
) -> List[ConvergenceTable]:
    """
    Weighted law of S_n on both sides: E_x[phi(S_n) e^{-theta S_n}; L_n >= 0]
    normalized, against nu_theta (start |x|), then E_x[phi(S_n) e^{theta S_n}; M_n < 0]
    normalized, against mu_theta (start -|x|).
    """
    ns = _check_ns(ns)
    tables = [
        prop_pr2_check(tilted, theta, phi, ns, reps, seed, boundary_law(v_table, theta), abs(start), workers),
        prop_pr2_check_neg(tilted, theta, phi, ns, reps, seed, boundary_law(u_table, theta), -abs(start), workers),
    ]
    for table in tables:
        _lattice_guard(tilted, table.name, table)
    return tables


def x_dependence(tables: Sequence[ConvergenceTable], table: RenewalTable, xs: Sequence[float]) -> Dict[str, Any]:
    """
    Ratio of the stabilized statistics at xs[1] and xs[0] against
    T(xs[1]) / T(xs[0]) for the renewal table T of the starting side.
    """
    a, b = tables[0].last, tables[1].last
    observed = b.statistic / a.statistic
    rel = math.sqrt((a.stderr / a.statistic) ** 2 + (b.stderr / b.statistic) ** 2)
    t0, t1 = float(table(xs[0])), float(table(xs[1]))
    expected = t1 / t0
    expected_bar = expected * (float(table.uncertainty(xs[0])) / t0 + float(table.uncertainty(xs[1])) / t1)
    bar = 3.0 * observed * rel + expected_bar
    return {"observed": observed, "expected": expected, "bar": bar, "passed": abs(observed - expected) <= bar}


def _first_min_kernel(rng: np.random.Generator, size: int, tilted: EnvironmentLaw, n: int, beta: float):
    sums = partial_sums(tilted.log_means()[tilted.sample_matrix(size, n, rng)])
    end = sums[:, -1]
    num = np.where(first_min_at_end(sums), np.exp((1.0 - beta) * end), 0.0)
    den = np.where(min_nonneg(sums), np.exp(-beta * end), 0.0)
    return MomentSums.from_samples(np.column_stack([num, den]))


def first_min_identity(
    env: EnvironmentLaw,
    solution: TiltSolution,
    ns: Sequence[int],
    reps: int,
    seed: int,
    workers: Optional[int] = None,
) -> ConvergenceTable:
    """E[e^{S_n}; tau_n = n] / P{L_n >= 0} across n, both on shared tilted paths"""
    ns = _check_ns(ns)
    tilted = tilted_env(env, solution)
    table = ConvergenceTable(name="first-min-identity", threshold=settings.STABILIZATION_THRESHOLD)
    for n in ns:
        sums = MomentSums.reduce(run_blocks(_first_min_kernel, f"first-min-{n}", reps, seed, workers, tilted=tilted, n=n, beta=solution.beta))
        ratio, stderr = ratio_from_sums(sums)
        table.add(n, ratio, stderr if math.isfinite(stderr) else 0.0)
    return table
