"""
Baxter identity check

    1 + sum_k t^k E[e^{theta S_k}; M_k < 0] = exp(sum_k t^k/k E[e^{theta S_k}; S_k < 0])

Both series are truncated at k = K and their terms are computed either by
exact enumeration or by Monte Carlo on common paths.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import logging
import math
import warnings

import numpy as np

from environment.env_law import EnvironmentLaw
from errors import TruncationWarning
from montecarlo.streams import MomentSums, run_blocks
from oracle.enumeration import exact_walk_functional
from randwalk.walk import ExpEndNeg, ExpMaxNeg

logger = logging.getLogger(__name__)

TRUNCATION_TARGET = 1e-6


@dataclass
class BaxterResult:
    theta: float
    t: float
    K: int
    method: str
    lhs_terms: List[float] = field(default_factory=list)
    rhs_terms: List[float] = field(default_factory=list)
    lhs_stderr: float = 0.0
    rhs_stderr: float = 0.0

    @property
    def lhs(self) -> float:
        return 1.0 + math.fsum(self.t ** k * a for k, a in enumerate(self.lhs_terms, start=1))

    @property
    def rhs(self) -> float:
        return math.exp(math.fsum(self.t ** k / k * b for k, b in enumerate(self.rhs_terms, start=1)))

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def relative_gap(self) -> float:
        return self.gap / self.rhs

    def partial_lhs(self) -> List[float]:
        """lhs truncated at k = 1..K"""
        partial = np.cumsum([self.t ** k * a for k, a in enumerate(self.lhs_terms, start=1)])
        return (1.0 + partial).tolist()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "t": self.t,
            "K": self.K,
            "method": self.method,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "lhs_stderr": self.lhs_stderr,
            "rhs_stderr": self.rhs_stderr,
        }


def _baxter_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, theta: float, K: int):
    sums = np.cumsum(env.log_means()[env.sample_matrix(size, K, rng)], axis=1)
    below = sums < 0.0
    weight = np.exp(theta * np.where(below, sums, 0.0))
    running_max_neg = np.maximum.accumulate(sums, axis=1) < 0.0
    lhs = np.where(running_max_neg, weight, 0.0)
    rhs = np.where(below, weight, 0.0)
    return MomentSums.from_samples(np.hstack([lhs, rhs]))


def baxter_check(
    env: EnvironmentLaw,
    theta: float,
    t: float,
    K: int,
    method: str = "exact",
    reps: int = 0,
    seed: int = 0,
    workers: Optional[int] = None,
) -> BaxterResult:
    """
    Both truncated sides of the Baxter identity under the law of env.

    Raises:
        SizeLimit: exact enumeration of a length-k walk beyond the walk budget
    """
    if theta <= 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0,1), got {t}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if t ** K >= TRUNCATION_TARGET:
        message = f"Baxter series truncated at K={K} with t^K = {t ** K:.2e}"
        warnings.warn(message, TruncationWarning)
        logger.warning(message)

    result = BaxterResult(theta=theta, t=t, K=K, method=method)
    if method == "exact":
        for k in range(1, K + 1):
            result.lhs_terms.append(exact_walk_functional(env, k, ExpMaxNeg(theta)).value)
            result.rhs_terms.append(exact_walk_functional(env, k, ExpEndNeg(theta)).value)
    elif method == "mc":
        if reps < 1:
            raise ValueError("Monte Carlo Baxter check needs reps >= 1")
        sums = MomentSums.reduce(run_blocks(_baxter_kernel, "baxter", reps, seed, workers, env=env, theta=theta, K=K))
        means = sums.mean()
        cov = sums.covariance() / sums.count
        result.lhs_terms = means[:K].tolist()
        result.rhs_terms = means[K:].tolist()
        powers = t ** np.arange(1, K + 1)
        lhs_grad = powers
        rhs_grad = result.rhs * powers / np.arange(1, K + 1)
        result.lhs_stderr = float(math.sqrt(max(lhs_grad @ cov[:K, :K] @ lhs_grad, 0.0)))
        result.rhs_stderr = float(math.sqrt(max(rhs_grad @ cov[K:, K:] @ rhs_grad, 0.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    logger.info(f"Baxter theta={theta} t={t} K={K} ({method}): lhs={result.lhs:.10g} rhs={result.rhs:.10g}")
    return result
