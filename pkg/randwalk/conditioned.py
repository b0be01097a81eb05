"""
Conditioned walks and importance-sampled walk functionals

Rejection sampling is the exact conditioned sampler. The h-transform
sampler moves with the kernel P{x+X in dy} T(y) on the allowed half-line
(T the u- or v-table) and carries self-normalized weights
prod Z(S_{k-1}) / T(S_k), so the weighted sample targets the exact
conditioned law whatever the table error; it is still flagged
approximate.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional
import logging
import math
import time

import numpy as np

from config import settings
from environment.env_law import EnvironmentLaw
from errors import ConditioningTimeout
from harness.tables import ConvergenceTable
from models import ConditioningMode, Estimate, EstimatorMethod, RenewalSide
from montecarlo.stats import effective_sample_size, ratio_from_sums
from montecarlo.streams import MomentSums, StreamRecord, child_rng, ledger, run_blocks
from randwalk.renewal import BoundaryLaw, RenewalTable
from randwalk.walk import (
    ExpMaxNeg,
    ExpMinNonneg,
    GridFunction,
    dual_sums,
    first_min_at_end,
    max_neg,
    min_nonneg,
    partial_sums,
)
from tilting.tilt import PathFunctional, TiltSolution

logger = logging.getLogger(__name__)

# proposals per rejection round are capped at this many path cells
MAX_ROUND_CELLS = 20_000_000
MIN_ROUND = 1000

_EVENTS = {
    ConditioningMode.stay_nonneg: min_nonneg,
    ConditioningMode.stay_neg: max_neg,
    ConditioningMode.first_min_at_n: first_min_at_end,
}


# =============================================================================
# WALK EXPECTATIONS
# =============================================================================

def _functional_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, n: int, functional, start: float, beta: float):
    atoms = env.sample_matrix(size, n, rng)
    sums = partial_sums(env.log_means()[atoms], start)
    h = np.asarray(functional(sums), dtype=float)
    if beta != 0.0:
        h = h * np.exp(-beta * (sums[:, -1] - start))
    return MomentSums.from_samples(h)


def walk_expectation(
    env: EnvironmentLaw,
    n: int,
    functional: PathFunctional,
    reps: int,
    seed: int,
    start: float = 0.0,
    workers: Optional[int] = None,
    tag: str = "walk-expectation",
) -> Estimate:
    """Plain Monte Carlo E_x[h(S_0..S_n)] under the law of env"""
    begin = time.time()
    sums = MomentSums.reduce(run_blocks(_functional_kernel, tag, reps, seed, workers, env=env, n=n, functional=functional, start=start, beta=0.0))
    return Estimate(
        value=max(float(sums.mean()[0]), 0.0),
        stderr=float(sums.stderr()[0]),
        reps=reps,
        method=EstimatorMethod.mc,
        elapsed=time.time() - begin,
        details={"n": n, "start": start},
    )


def tilted_walk_expectation(
    tilted: EnvironmentLaw,
    solution: TiltSolution,
    n: int,
    functional: PathFunctional,
    reps: int,
    seed: int,
    start: float = 0.0,
    workers: Optional[int] = None,
    tag: str = "tilted-walk",
) -> Estimate:
    """
    E_x[h] under the original law as gamma^n E_tilted[h e^{-beta (S_n - x)}].

    The log of the gamma^n factor goes into details so callers can rescale
    without overflow.
    """
    begin = time.time()
    sums = MomentSums.reduce(run_blocks(_functional_kernel, tag, reps, seed, workers, env=tilted, n=n, functional=functional, start=start, beta=solution.beta))
    log_scale = n * solution.log_gamma
    scale = math.exp(log_scale)
    tilted_mean = float(sums.mean()[0])
    tilted_stderr = float(sums.stderr()[0])
    return Estimate(
        value=max(scale * tilted_mean, 0.0),
        stderr=scale * tilted_stderr,
        reps=reps,
        method=EstimatorMethod.tilted_is,
        elapsed=time.time() - begin,
        details={"n": n, "start": start, "log_scale": log_scale, "tilted_mean": tilted_mean, "tilted_stderr": tilted_stderr},
    )


def prob_min_nonneg(
    tilted: EnvironmentLaw,
    solution: TiltSolution,
    n: int,
    reps: int,
    seed: int,
    workers: Optional[int] = None,
) -> Estimate:
    """P{L_n >= 0} under the original law, estimated on tilted paths"""
    if n == 0:
        return Estimate(value=1.0, stderr=0.0, reps=reps, method=EstimatorMethod.tilted_is, details={"n": 0, "log_scale": 0.0})
    return tilted_walk_expectation(tilted, solution, n, ExpMinNonneg(0.0), reps, seed, workers=workers, tag=f"prob-min-nonneg-{n}")


# =============================================================================
# CONDITIONED SAMPLERS
# =============================================================================

@dataclass
class ConditionedSample:
    """Weighted sample of walks S_0..S_n given the conditioning event"""
    mode: ConditioningMode
    n: int
    sums: np.ndarray
    weights: np.ndarray
    tries: int
    hits: int = 0
    method: str = "rejection"
    approximate: bool = False
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.sums.shape[0])

    @property
    def acceptance_rate(self) -> float:
        """Accepted fraction of all proposals (including surplus hits of the last round)"""
        if not self.tries:
            return math.nan
        return (self.hits or self.size) / self.tries

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)

    def endpoints(self) -> np.ndarray:
        return self.sums[:, -1]

    def weighted_mean(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values) / np.sum(self.weights))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "n": self.n,
            "size": self.size,
            "tries": self.tries,
            "acceptance_rate": self.acceptance_rate,
            "method": self.method,
            "approximate": self.approximate,
            "ess": self.ess,
            **self.details,
        }


def sample_conditioned(
    tilted: EnvironmentLaw,
    mode: ConditioningMode,
    n: int,
    reps: int,
    seed: int,
    start: float = 0.0,
    method: str = "rejection",
    table: Optional[RenewalTable] = None,
) -> ConditionedSample:
    """
    Walks of length n conditioned on the mode event.

    Raises:
        ConditioningTimeout: rejection acceptance rate below MIN_ACCEPTANCE_RATE
    """
    if n < 1 or n > settings.MAX_CONDITIONED_N:
        raise ValueError(f"n must lie in [1, {settings.MAX_CONDITIONED_N}], got {n}")
    if method == "rejection":
        return _rejection(tilted, mode, n, reps, seed, start)
    if method == "h-transform":
        if table is None:
            raise ValueError("h-transform sampling needs a renewal table")
        return _h_transform(tilted, mode, n, reps, seed, start, table)
    raise ValueError(f"unknown method {method!r}")


def _rejection(tilted: EnvironmentLaw, mode: ConditioningMode, n: int, reps: int, seed: int, start: float) -> ConditionedSample:
    event = _EVENTS[mode]
    x = tilted.log_means()
    tag = f"conditioned-{mode.value}-{n}"
    max_batch = max(MIN_ROUND, MAX_ROUND_CELLS // (n + 1))
    accepted: List[np.ndarray] = []
    count = 0
    hits = 0
    tries = 0
    rounds = 0
    rate = 1.0
    while count < reps:
        batch = int(min(max_batch, max(MIN_ROUND, math.ceil(1.2 * (reps - count) / rate))))
        rng = child_rng(seed, tag, rounds)
        sums = partial_sums(x[tilted.sample_matrix(batch, n, rng)], start)
        keep = sums[event(sums)]
        hits += keep.shape[0]
        accepted.append(keep[: reps - count])
        count += min(keep.shape[0], reps - count)
        tries += batch
        rounds += 1
        rate = max(hits / tries, settings.MIN_ACCEPTANCE_RATE)
        # even an optimistic rate (three more hits) below the floor
        if count < reps and tries >= 100_000 and (hits + 3) / tries < settings.MIN_ACCEPTANCE_RATE:
            raise ConditioningTimeout(
                f"{mode.value} n={n}: {count} of {tries} proposals accepted, below {settings.MIN_ACCEPTANCE_RATE}"
            )
    ledger.record(StreamRecord(tag=tag, root_seed=seed, blocks=rounds, block_size=max_batch, reps=tries))
    sums = np.concatenate(accepted)[:reps]
    logger.info(f"Rejection {mode.value} n={n}: acceptance {hits / tries:.4g} over {tries} proposals")
    return ConditionedSample(mode=mode, n=n, sums=sums, weights=np.ones(sums.shape[0]), tries=tries, hits=hits)


def _h_transform(
    tilted: EnvironmentLaw,
    mode: ConditioningMode,
    n: int,
    reps: int,
    seed: int,
    start: float,
    table: RenewalTable,
) -> ConditionedSample:
    """
    Doob-transform proposal with self-normalized correction weights.

    stay-nonneg uses a u-table; stay-neg and first-min-at-n use a v-table,
    the latter returning the dual of stay-neg paths started at 0.
    """
    wanted = RenewalSide.u if mode == ConditioningMode.stay_nonneg else RenewalSide.v
    if table.side != wanted:
        raise ValueError(f"mode {mode.value} needs a {wanted.value}-table, got {table.side.value}")
    if mode == ConditioningMode.first_min_at_n and start != 0.0:
        raise ValueError("first-min-at-n h-transform sampling starts at 0")

    rng = child_rng(seed, f"h-transform-{mode.value}-{n}", 0)
    x = tilted.log_means()
    w = tilted.weights()
    state = np.full(reps, float(start))
    sums = np.empty((reps, n + 1))
    sums[:, 0] = start
    log_weight = np.zeros(reps)
    for k in range(1, n + 1):
        candidates = state[:, None] + x[None, :]
        allowed = candidates >= 0.0 if wanted == RenewalSide.u else candidates < 0.0
        mass = np.where(allowed, w[None, :] * table(candidates), 0.0)
        norm = mass.sum(axis=1)
        dead = norm <= 0.0
        cdf = np.cumsum(mass, axis=1) / np.where(dead, 1.0, norm)[:, None]
        choice = np.minimum((rng.random(reps)[:, None] > cdf).sum(axis=1), x.size - 1)
        state = candidates[np.arange(reps), choice]
        target = table(state)
        with np.errstate(divide="ignore"):
            log_weight += np.log(np.where(dead, 0.0, norm)) - np.log(np.where(dead, 1.0, target))
        log_weight[dead] = -np.inf
        sums[:, k] = state

    finite = np.isfinite(log_weight)
    shift = log_weight[finite].max() if np.any(finite) else 0.0
    weights = np.where(finite, np.exp(np.where(finite, log_weight, shift) - shift), 0.0)
    if mode == ConditioningMode.first_min_at_n:
        sums = dual_sums(sums)
    sample = ConditionedSample(
        mode=mode,
        n=n,
        sums=sums,
        weights=weights,
        tries=reps,
        method="h-transform",
        approximate=True,
        details={"table_method": table.method.value, "table_K": table.K},
    )
    ess = sample.ess
    if ess < settings.ESS_MIN_FRACTION * reps:
        logger.warning(f"h-transform {mode.value} n={n}: ESS {ess:.1f} of {reps}")
    return sample


# =============================================================================
# CONDITIONAL LIMIT CHECKS
# =============================================================================

def _ratio_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, n: int, start: float, theta: float, phi: GridFunction, side: RenewalSide):
    sums = partial_sums(env.log_means()[env.sample_matrix(size, n, rng)], start)
    base = ExpMinNonneg(theta)(sums) if side == RenewalSide.u else ExpMaxNeg(theta)(sums)
    return MomentSums.from_samples(np.column_stack([base * phi(sums[:, -1]), base]))


def _conditional_ratio_table(
    tilted: EnvironmentLaw,
    theta: float,
    phi: GridFunction,
    ns: Iterable[int],
    reps: int,
    seed: int,
    boundary: BoundaryLaw,
    start: float,
    side: RenewalSide,
    workers: Optional[int],
) -> ConvergenceTable:
    if theta <= 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    reference = boundary.expect(lambda z: phi(-z))
    table = ConvergenceTable(
        name=f"conditional-ratio-{side.value}",
        threshold=settings.SCALING_THRESHOLD,
        reference=reference,
        reference_bar=boundary.inverse_normalizer_bar * boundary.normalizer * phi.sup(),
    )
    if boundary.extrapolated:
        table.notes.append(f"renewal table extrapolated beyond {boundary.table.rmax}")
    for n in ns:
        blocks = run_blocks(_ratio_kernel, f"pr2-{side.value}-{n}", reps, seed, workers, env=tilted, n=n, start=start, theta=theta, phi=phi, side=side)
        ratio, stderr = ratio_from_sums(MomentSums.reduce(blocks))
        table.add(n, ratio, stderr if math.isfinite(stderr) else 0.0, gap=ratio - reference)
    logger.info(f"Conditional ratio ({side.value}) theta={theta}: last {table.last.statistic:.6g} vs limit {reference:.6g}")
    return table


def prop_pr2_check(
    tilted: EnvironmentLaw,
    theta: float,
    phi: GridFunction,
    ns: Iterable[int],
    reps: int,
    seed: int,
    nu: BoundaryLaw,
    start: float = 0.0,
    workers: Optional[int] = None,
) -> ConvergenceTable:
    """
    E_x[phi(S_n) e^{-theta S_n}; L_n >= 0] / E_x[e^{-theta S_n}; L_n >= 0]
    across n against the limit int phi(-z) nu_theta(dz), x >= 0.
    """
    if start < 0.0:
        raise ValueError(f"start must be >= 0, got {start}")
    return _conditional_ratio_table(tilted, theta, phi, ns, reps, seed, nu, start, RenewalSide.u, workers)


def prop_pr2_check_neg(
    tilted: EnvironmentLaw,
    theta: float,
    phi: GridFunction,
    ns: Iterable[int],
    reps: int,
    seed: int,
    mu: BoundaryLaw,
    start: float = 0.0,
    workers: Optional[int] = None,
) -> ConvergenceTable:
    """
    E_x[phi(S_n) e^{theta S_n}; M_n < 0] / E_x[e^{theta S_n}; M_n < 0]
    across n against the limit int phi(-z) mu_theta(dz), x <= 0.
    """
    if start > 0.0:
        raise ValueError(f"start must be <= 0, got {start}")
    return _conditional_ratio_table(tilted, theta, phi, ns, reps, seed, mu, start, RenewalSide.v, workers)
