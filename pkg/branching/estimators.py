"""
Annealed survival estimators and the survival-conditioned population sampler

  naive          fraction of simulated populations alive at n
  quenched-cond  mean of the exact quenched survival over sampled environments
  tilted-is      gamma^n * mean of e^{-beta S_n} q_n over tilted environments

The conditioned sampler draws environments from the tilted law with weight
gamma^n e^{-beta S_n} q_n and then a population path given Z_n > 0 by
rejection inside each environment.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional
import logging
import math
import time
import warnings

import numpy as np

from branching.population import simulate_populations
from branching.quenched import log_survival_batch, walk_from_atoms
from config import settings
from environment.env_law import EnvironmentLaw
from errors import CensoringWarning, ESSWarning
from models import Estimate, EstimatorMethod
from montecarlo.stats import effective_sample_size, weighted_pmf
from montecarlo.streams import MomentSums, run_blocks
from tilting.tilt import TiltSolution, tilted_env

logger = logging.getLogger(__name__)

# replicas of one environment per rejection round
MAX_REPLICAS_PER_ROUND = 1000
# population cells simulated per rejection round
MAX_ROUND_CELLS = 4_000_000

# (walk sums (m, n+1), sizes (m, n+1)) -> named per-path arrays
PathSummary = Callable[[np.ndarray, np.ndarray], Dict[str, np.ndarray]]


# =============================================================================
# SURVIVAL ESTIMATORS
# =============================================================================

def _naive_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, n: int, cap: int):
    atoms = env.sample_matrix(size, n, rng)
    sizes, censored = simulate_populations(env, atoms, rng, cap)
    alive = (sizes[:, -1] > 0) | (censored >= 0)
    return MomentSums.from_samples(alive.astype(float)), int((censored >= 0).sum())


def _quenched_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, n: int):
    atoms = env.sample_matrix(size, n, rng)
    return MomentSums.from_samples(np.exp(log_survival_batch(env, atoms)))


def _tilted_terms(tilted: EnvironmentLaw, atoms: np.ndarray, beta: float) -> np.ndarray:
    """log(e^{-beta S_n} q_n) per row; never above 0"""
    end = walk_from_atoms(tilted, atoms)[:, -1]
    return -beta * end + log_survival_batch(tilted, atoms)


def _tilted_kernel(rng: np.random.Generator, size: int, tilted: EnvironmentLaw, n: int, beta: float):
    atoms = tilted.sample_matrix(size, n, rng)
    return MomentSums.from_samples(np.exp(_tilted_terms(tilted, atoms, beta)))


def _survival_tag(method: EstimatorMethod, n: int) -> str:
    return f"survival-{method.value}-{n}"


def estimate_survival(
    env: EnvironmentLaw,
    solution: Optional[TiltSolution],
    n: int,
    reps: int,
    method: EstimatorMethod,
    seed: int,
    workers: Optional[int] = None,
    cap: Optional[int] = None,
) -> Estimate:
    """Monte Carlo estimate of P{Z_n > 0}"""
    method = EstimatorMethod(method)
    begin = time.time()
    if n == 0:
        return Estimate(value=1.0, stderr=0.0, reps=reps, method=method, details={"n": 0})
    tag = _survival_tag(method, n)
    details: Dict[str, Any] = {"n": n}

    if method == EstimatorMethod.naive:
        cap = int(settings.POPULATION_CAP if cap is None else cap)
        blocks = run_blocks(_naive_kernel, tag, reps, seed, workers, env=env, n=n, cap=cap)
        sums = MomentSums.reduce([b[0] for b in blocks])
        censored = sum(b[1] for b in blocks)
        details["censored"] = censored
        if censored:
            message = f"naive survival n={n}: {censored} paths censored at cap {cap} (counted alive)"
            warnings.warn(message, CensoringWarning)
            logger.warning(message)
        value, stderr = float(sums.mean()[0]), float(sums.stderr()[0])
    elif method == EstimatorMethod.quenched_cond:
        sums = MomentSums.reduce(run_blocks(_quenched_kernel, tag, reps, seed, workers, env=env, n=n))
        value, stderr = float(sums.mean()[0]), float(sums.stderr()[0])
    elif method == EstimatorMethod.tilted_is:
        if solution is None:
            raise ValueError("tilted-is needs a TiltSolution")
        tilted = tilted_env(env, solution)
        sums = MomentSums.reduce(run_blocks(_tilted_kernel, tag, reps, seed, workers, tilted=tilted, n=n, beta=solution.beta))
        log_scale = n * solution.log_gamma
        tilted_mean, tilted_stderr = float(sums.mean()[0]), float(sums.stderr()[0])
        details.update({"log_scale": log_scale, "tilted_mean": tilted_mean, "tilted_stderr": tilted_stderr})
        value, stderr = math.exp(log_scale) * tilted_mean, math.exp(log_scale) * tilted_stderr
    else:
        raise ValueError(f"method {method.value} does not estimate survival")

    estimate = Estimate(value=value, stderr=stderr, reps=reps, method=method, elapsed=time.time() - begin, details=details)
    logger.info(f"Survival n={n} ({method.value}): {value:.6g} +- {stderr:.2g} in {estimate.elapsed:.2f}s")
    return estimate


# =============================================================================
# SURVIVAL-CONDITIONED POPULATIONS
# =============================================================================

@dataclass
class _PopulationBlock:
    log_terms: np.ndarray
    included: np.ndarray
    final: np.ndarray
    summaries: Dict[str, np.ndarray]
    censored: int
    over_budget: int
    below_floor: int
    tries: int
    sums: Optional[np.ndarray] = None
    sizes: Optional[np.ndarray] = None


def _conditioned_kernel(
    rng: np.random.Generator,
    size: int,
    tilted: EnvironmentLaw,
    n: int,
    beta: float,
    floor: float,
    budget: int,
    cap: int,
    summary: Optional[PathSummary],
    keep_paths: bool,
) -> _PopulationBlock:
    # environment stage first, so the draws match the tilted-is survival estimator
    atoms = tilted.sample_matrix(size, n, rng)
    log_q = log_survival_batch(tilted, atoms)
    walks = walk_from_atoms(tilted, atoms)
    log_terms = -beta * walks[:, -1] + log_q

    eligible = log_q >= math.log(floor)
    sizes = np.zeros((size, n + 1), dtype=np.int64)
    found = np.zeros(size, dtype=bool)
    censored_path = np.zeros(size, dtype=bool)
    used = np.zeros(size, dtype=np.int64)
    q = np.exp(log_q)
    pending = np.flatnonzero(eligible)
    round_rows = max(1, MAX_ROUND_CELLS // (n + 1))
    while pending.size:
        # a few expected survivors per environment and round
        replicas = np.clip(np.ceil(2.0 / q[pending]), 1, MAX_REPLICAS_PER_ROUND).astype(np.int64)
        replicas = np.minimum(replicas, budget - used[pending])
        take = max(1, int(np.searchsorted(np.cumsum(replicas), round_rows, side="right")))
        batch, replicas = pending[:take], replicas[:take]
        rows = np.repeat(batch, replicas)
        trial, cens = simulate_populations(tilted, atoms[rows], rng, cap)
        survived = (trial[:, -1] > 0) | (cens >= 0)
        used[batch] += replicas
        # first surviving replica of each environment
        hit_rows = rows[survived]
        first_idx = np.flatnonzero(survived)
        uniq, pos = np.unique(hit_rows, return_index=True)
        sizes[uniq] = trial[first_idx[pos]]
        censored_path[uniq] = cens[first_idx[pos]] >= 0
        found[uniq] = True
        pending = pending[~found[pending] & (used[pending] < budget)]

    over_budget = int((eligible & ~found).sum())
    included = found & ~censored_path
    summaries = summary(walks[included], sizes[included]) if summary is not None else {}
    return _PopulationBlock(
        log_terms=log_terms,
        included=included,
        final=sizes[included, -1],
        summaries=summaries,
        censored=int(censored_path.sum()),
        over_budget=over_budget,
        below_floor=int((~eligible).sum()),
        tries=int(used.sum()),
        sums=walks[included] if keep_paths else None,
        sizes=sizes[included] if keep_paths else None,
    )


@dataclass
class ConditionedPopulation:
    """
    Weighted sample of (environment, population path) given Z_n > 0.

    `log_terms` covers every sampled environment; path data covers the
    included ones (above the survival floor, within budget, not censored).
    """
    n: int
    log_scale: float
    log_terms: np.ndarray
    included: np.ndarray
    final: np.ndarray
    summaries: Dict[str, np.ndarray] = field(default_factory=dict)
    censored: int = 0
    over_budget: int = 0
    below_floor: int = 0
    tries: int = 0
    sums: Optional[np.ndarray] = None
    sizes: Optional[np.ndarray] = None

    @property
    def reps(self) -> int:
        return int(self.log_terms.size)

    def survival_estimate(self) -> float:
        """Mean of the unnormalized weights gamma^n e^{-beta S_n} q_n"""
        return math.exp(self.log_scale) * float(np.exp(self.log_terms).mean())

    def weights(self) -> np.ndarray:
        """Relative weights of the included paths (max weight 1)"""
        terms = self.log_terms[self.included]
        if terms.size == 0:
            return terms
        return np.exp(terms - terms.max())

    def excluded_mass(self) -> float:
        """Share of the total weight without a path: bias bound for path statistics"""
        total = np.exp(self.log_terms - self.log_terms.max())
        return float(1.0 - total[self.included].sum() / total.sum())

    def ess(self) -> float:
        return effective_sample_size(self.weights())

    def pmf(self) -> Dict[int, float]:
        """Weighted law of Z_n given Z_n > 0"""
        return weighted_pmf(self.final, self.weights())

    def moment(self, theta: float) -> float:
        """Weighted E[Z_n^theta | Z_n > 0]"""
        w = self.weights()
        return float(np.sum(w * self.final.astype(float) ** theta) / np.sum(w))

    def weighted_mean(self, values: np.ndarray) -> float:
        w = self.weights()
        return float(np.sum(w * values) / np.sum(w))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "reps": self.reps,
            "included": int(self.included.sum()),
            "ess": self.ess(),
            "excluded_mass": self.excluded_mass(),
            "censored": self.censored,
            "over_budget": self.over_budget,
            "below_floor": self.below_floor,
            "tries": self.tries,
            "survival_estimate": self.survival_estimate(),
        }


def conditioned_population(
    env: EnvironmentLaw,
    solution: TiltSolution,
    n: int,
    reps: int,
    seed: int,
    workers: Optional[int] = None,
    summary: Optional[PathSummary] = None,
    keep_paths: bool = False,
    floor: Optional[float] = None,
    budget: Optional[int] = None,
    cap: Optional[int] = None,
) -> ConditionedPopulation:
    """
    Two-stage sampler of (environment, Z-path) given Z_n > 0.

    Environments with q_n below the survival floor, or without a surviving
    path within the rejection budget, keep their weight in the survival
    estimate but get no path; their share is reported as excluded_mass.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    floor = settings.SURVIVAL_FLOOR if floor is None else floor
    budget = int(settings.REJECTION_BUDGET if budget is None else budget)
    cap = int(settings.POPULATION_CAP if cap is None else cap)
    begin = time.time()
    tilted = tilted_env(env, solution)
    blocks: List[_PopulationBlock] = run_blocks(
        _conditioned_kernel,
        _survival_tag(EstimatorMethod.tilted_is, n),
        reps,
        seed,
        workers,
        tilted=tilted,
        n=n,
        beta=solution.beta,
        floor=floor,
        budget=budget,
        cap=cap,
        summary=summary,
        keep_paths=keep_paths,
    )
    keys = blocks[0].summaries.keys()
    sample = ConditionedPopulation(
        n=n,
        log_scale=n * solution.log_gamma,
        log_terms=np.concatenate([b.log_terms for b in blocks]),
        included=np.concatenate([b.included for b in blocks]),
        final=np.concatenate([b.final for b in blocks]),
        summaries={k: np.concatenate([b.summaries[k] for b in blocks]) for k in keys},
        censored=sum(b.censored for b in blocks),
        over_budget=sum(b.over_budget for b in blocks),
        below_floor=sum(b.below_floor for b in blocks),
        tries=sum(b.tries for b in blocks),
        sums=np.concatenate([b.sums for b in blocks]) if keep_paths else None,
        sizes=np.concatenate([b.sizes for b in blocks]) if keep_paths else None,
    )

    ess = sample.ess()
    if ess < settings.ESS_MIN_FRACTION * reps:
        message = f"conditioned population n={n}: ESS {ess:.1f} below {settings.ESS_MIN_FRACTION:.0%} of {reps}"
        warnings.warn(message, ESSWarning)
        logger.warning(message)
    if sample.censored:
        message = f"conditioned population n={n}: {sample.censored} paths censored at cap {cap} and excluded"
        warnings.warn(message, CensoringWarning)
        logger.warning(message)
    if sample.below_floor or sample.over_budget:
        logger.info(
            f"conditioned population n={n}: {sample.below_floor} environments below floor {floor}, "
            f"{sample.over_budget} over budget; excluded weight share {sample.excluded_mass():.3g}"
        )
    logger.info(f"Conditioned population n={n}: {int(sample.included.sum())} paths, ESS {ess:.1f}, {time.time() - begin:.2f}s")
    return sample
