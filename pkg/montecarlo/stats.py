"""
Monte Carlo statistics helpers: standard errors, ratio estimates,
effective sample size, weighted quantiles and distribution distances
"""
from typing import Dict, Mapping, Sequence, Tuple
import math

import numpy as np
from scipy import stats

from montecarlo.streams import MomentSums


def mean_stderr(x: np.ndarray) -> Tuple[float, float]:
    """Sample mean and standard error of the mean (0 for a single sample)"""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    if n < 2:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


def confidence_interval(value: float, stderr: float, level: float = 0.95) -> Tuple[float, float]:
    z = stats.norm.ppf(0.5 + level / 2.0)
    return value - z * stderr, value + z * stderr


def ratio_from_sums(sums: MomentSums, num: int = 0, den: int = 1) -> Tuple[float, float]:
    """
    Ratio of two column means with a delta-method standard error.

    Var(A/B) ~ (Var A - 2 r Cov(A,B) + r^2 Var B) / (n B^2), r = A/B.
    """
    mu = sums.mean()
    cov = sums.covariance()
    a, b = mu[num], mu[den]
    if b == 0.0:
        return math.nan, math.inf
    r = a / b
    var = (cov[num, num] - 2.0 * r * cov[num, den] + r * r * cov[den, den]) / (sums.count * b * b)
    return float(r), float(math.sqrt(max(var, 0.0)))


def ratio_stderr(a: float, sa: float, b: float, sb: float) -> float:
    """Standard error of a/b for independent a and b"""
    if b == 0.0:
        return math.inf
    r = a / b
    return abs(r) * math.sqrt((sa / a) ** 2 + (sb / b) ** 2) if a != 0.0 else sa / abs(b)


def effective_sample_size(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2"""
    w = np.asarray(weights, dtype=float)
    normalization = float(np.sum(w * w))
    if normalization == 0.0:
        return 0.0
    return float(np.sum(w)) ** 2 / normalization


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: Sequence[float]) -> np.ndarray:
    """Quantiles of the weighted empirical law (left-continuous inverse cdf)"""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    v = values[order]
    cdf = np.cumsum(weights[order])
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, np.asarray(q, dtype=float), side="left")
    return v[np.clip(idx, 0, v.size - 1)]


def weighted_pmf(values: np.ndarray, weights: np.ndarray) -> Dict[int, float]:
    """Normalized weighted empirical pmf of integer values"""
    values = np.asarray(values, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    uniq, inverse = np.unique(values, return_inverse=True)
    mass = np.bincount(inverse, weights=weights)
    mass /= mass.sum()
    return {int(k): float(p) for k, p in zip(uniq, mass)}


def tv_distance(p: Mapping[int, float], q: Mapping[int, float]) -> float:
    """Total variation distance between two pmfs on the integers"""
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def coarsen_pmf(pmf: Mapping[int, float], zmax: int) -> Dict[int, float]:
    """States above zmax, and any missing mass, merged into the single state zmax + 1"""
    head = {int(k): float(v) for k, v in pmf.items() if k <= zmax}
    head[zmax + 1] = max(0.0, 1.0 - math.fsum(head.values()))
    return head
