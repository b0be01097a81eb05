"""
Renewal functions u, v of the (tilted, driftless) associated walk

    u(x) = 1 + sum_k P{-S_k <= x, M_k < 0},   x >= 0
    v(x) = 1 + sum_k P{-S_k > x,  L_k >= 0},  x <= 0

Two estimators build a RenewalTable on a grid of |x| values:

  series  the sum above truncated at k = K, all k on common paths; the
          k = K term is reported as the visible truncation bias
  ladder  ladder heights are sampled (strict descending for u, weak
          ascending for v) and the renewal equation is solved on a grid;
          floor- and ceiling-rounded heights bracket the answer, the
          half-width is reported as the discretization bar

Tables are immutable once built. Lookup is a right-continuous step on
lattice walks (grid aligned to the span) and linear interpolation
otherwise.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import enum
import logging
import math
import warnings

import numpy as np
from scipy import integrate, special

from config import settings
from environment.env_law import EnvironmentLaw
from errors import TruncationWarning
from models import Estimate, EstimatorMethod, RenewalSide
from montecarlo.streams import MomentSums, run_blocks

logger = logging.getLogger(__name__)

LADDER_CHUNK_STEPS = 256
LADDER_BATCHES = 16
DISCRETIZATION_REFINEMENT = 16
QUADRATURE_REFINEMENT = 16
SPAN_TOL = 1e-9


class RenewalMethod(str, enum.Enum):
    series = "series"
    ladder = "ladder"


# =============================================================================
# RENEWAL TABLE
# =============================================================================

@dataclass(frozen=True)
class RenewalTable:
    """
    Renewal function values on the grid r = |x| = 0, step, 2*step, ...

    `bias` is the k = K term (series) or the discretization plus censoring
    bar (ladder).
    """
    side: RenewalSide
    grid: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    bias: np.ndarray
    K: int
    method: RenewalMethod
    span: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0]) if self.grid.size > 1 else 1.0

    @property
    def rmax(self) -> float:
        return float(self.grid[-1])

    @property
    def is_step_function(self) -> bool:
        return self.span is not None

    def natural_x(self) -> np.ndarray:
        """Grid in the table's own coordinates (x >= 0 for u, x <= 0 for v)"""
        return self.grid if self.side == RenewalSide.u else -self.grid

    def _magnitude_lookup(self, values: np.ndarray, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        step = self.step
        if self.is_step_function:
            if self.side == RenewalSide.u:
                idx = np.floor(r / step + SPAN_TOL)
            else:
                idx = np.ceil(r / step - SPAN_TOL)
            idx = idx.astype(np.int64)
            inside = np.clip(idx, 0, self.grid.size - 1)
            out = values[inside]
            beyond = idx > self.grid.size - 1
            if np.any(beyond):
                slope = (values[-1] - values[-2]) / step if values.size > 1 else 0.0
                out = np.where(beyond, values[-1] + slope * (idx - (self.grid.size - 1)) * step, out)
            return out
        out = np.interp(r, self.grid, values)
        beyond = r > self.rmax
        if np.any(beyond) and values.size > 1:
            slope = (values[-1] - values[-2]) / step
            out = np.where(beyond, values[-1] + slope * (r - self.rmax), out)
        return out

    def __call__(self, x) -> np.ndarray:
        """Renewal function at x; 0 on the wrong half-line"""
        x = np.asarray(x, dtype=float)
        if self.side == RenewalSide.u:
            valid = x >= 0.0
            r = np.where(valid, x, 0.0)
        else:
            valid = x <= 0.0
            r = np.where(valid, -x, 0.0)
        return np.where(valid, self._magnitude_lookup(self.estimate, r), 0.0)

    def uncertainty(self, x) -> np.ndarray:
        """stderr plus bias bar at x (0 on the wrong half-line)"""
        x = np.asarray(x, dtype=float)
        valid = x >= 0.0 if self.side == RenewalSide.u else x <= 0.0
        r = np.where(valid, np.abs(x), 0.0)
        bar = self._magnitude_lookup(self.stderr, r) + self._magnitude_lookup(self.bias, r)
        return np.where(valid, bar, 0.0)

    def to_rows(self) -> List[Dict[str, float]]:
        return [
            {"x": float(x), "estimate": float(e), "stderr": float(s), "K_term": float(b)}
            for x, e, s, b in zip(self.natural_x(), self.estimate, self.stderr, self.bias)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "side": self.side.value,
            "method": self.method.value,
            "K": self.K,
            "span": self.span,
            "rows": self.to_rows(),
            "details": self.details,
        }


def _table_grid(env: EnvironmentLaw, rmax: float, step: Optional[float]) -> Tuple[np.ndarray, Optional[float]]:
    """Grid 0..rmax, aligned to the value span on lattice walks"""
    span = env.value_span() if env.is_lattice() else None
    if span is not None and span > 0.0:
        step = span
    step = settings.RENEWAL_GRID_STEP if step is None else step
    count = int(math.floor(rmax / step + SPAN_TOL)) + 1
    return np.arange(count) * step, (span if span else None)


# =============================================================================
# SERIES ESTIMATOR
# =============================================================================

def _series_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, side: RenewalSide, grid: np.ndarray, K: int):
    atoms = env.sample_matrix(size, K, rng)
    sums = np.cumsum(env.log_means()[atoms], axis=1)                       # S_1..S_K
    if side == RenewalSide.u:
        alive = np.maximum.accumulate(sums, axis=1) < 0.0                   # M_k < 0
        hit = alive[:, :, None] & (-sums[:, :, None] <= grid[None, None, :])
    else:
        alive = np.minimum.accumulate(sums, axis=1) >= 0.0                  # L_k >= 0
        hit = alive[:, :, None] & (sums[:, :, None] < grid[None, None, :])
    per_path = hit.sum(axis=1)                                              # (size, nx)
    last = hit[:, -1, :]
    per_k = hit.sum(axis=0).astype(float)                                   # (K, nx)
    return MomentSums.from_samples(np.hstack([per_path, last])), per_k


def _series_table(
    env: EnvironmentLaw,
    side: RenewalSide,
    grid: np.ndarray,
    span: Optional[float],
    K: int,
    reps: int,
    seed: int,
    workers: Optional[int],
) -> RenewalTable:
    blocks = run_blocks(_series_kernel, f"renewal-{side.value}-series", reps, seed, workers, env=env, side=side, grid=grid, K=K)
    sums = MomentSums.reduce([b[0] for b in blocks])
    per_k = sum(b[1] for b in blocks) / reps
    nx = grid.size
    means = sums.mean()
    errs = sums.stderr()
    estimate = 1.0 + means[:nx]
    stderr = errs[:nx]
    k_term = means[nx:]

    # t_k ~ C k^{-3/2}: fit C on the second half of the terms
    ks = np.arange(1, K + 1)
    upper = ks > K // 2
    tail_const = (per_k[upper] * ks[upper, None] ** 1.5).mean(axis=0)
    tail_estimate = tail_const * float(special.zeta(1.5, K + 1))

    flagged = (k_term > 10.0 * stderr) & (k_term > 0.0)
    if np.any(flagged):
        worst = float(np.max(k_term[flagged] / np.maximum(stderr[flagged], 1e-300)))
        message = f"renewal {side.value}: K={K} term exceeds 10x pooled stderr at {int(flagged.sum())} grid points (worst ratio {worst:.1f})"
        warnings.warn(message, TruncationWarning)
        logger.warning(message)

    return RenewalTable(
        side=side,
        grid=grid,
        estimate=estimate,
        stderr=stderr,
        bias=k_term,
        K=K,
        method=RenewalMethod.series,
        span=span,
        details={"reps": reps, "tail_estimate": tail_estimate.tolist()},
    )


# =============================================================================
# LADDER ESTIMATOR
# =============================================================================

def _ladder_kernel(rng: np.random.Generator, size: int, env: EnvironmentLaw, side: RenewalSide, time_cap: int):
    """
    First ladder height of each replica: -S_T at T = min{k: S_k < 0} (u) or
    S_T at T = min{k: S_k >= 0} (v). Replicas still running at time_cap
    are censored.
    """
    x = env.log_means()
    heights = np.full(size, np.nan)
    position = np.zeros(size)
    running = np.arange(size)
    elapsed = 0
    while running.size and elapsed < time_cap:
        steps = min(LADDER_CHUNK_STEPS, time_cap - elapsed)
        path = position[running, None] + np.cumsum(x[env.sample_matrix(running.size, steps, rng)], axis=1)
        passed = path < 0.0 if side == RenewalSide.u else path >= 0.0
        done = passed.any(axis=1)
        first = passed.argmax(axis=1)
        finished = running[done]
        level = path[done, first[done]]
        heights[finished] = -level if side == RenewalSide.u else level
        position[running[~done]] = path[~done, -1]
        running = running[~done]
        elapsed += steps
    return heights


def _renewal_counts(pmf: np.ndarray, imax: int, strict: bool) -> np.ndarray:
    """
    Expected renewal counts for integer heights with pmf[j] = P{H = j}:

      strict=False  U[i] = #{n >= 0: H_1+..+H_n <= i}
      strict=True   W[i] = #{n >= 0: H_1+..+H_n <  i}
    """
    p0 = float(pmf[0]) if pmf.size else 0.0
    tail = pmf[1:]
    out = np.zeros(imax + 1)
    for i in range(1 if strict else 0, imax + 1):
        j = min(tail.size, i)
        # sum_{j>=1} p_j out[i-j]
        conv = float(np.dot(tail[:j], out[i - 1::-1][:j])) if j else 0.0
        out[i] = (1.0 + conv) / (1.0 - p0)
    return out


def _counts_to_table(counts: np.ndarray, side: RenewalSide) -> np.ndarray:
    """u = U directly; v = 1 + W - 1{r > 0}"""
    if side == RenewalSide.u:
        return counts
    out = counts.copy()
    out[0] = 1.0
    out[1:] = counts[1:]
    return out


def _bracket_from_heights(
    heights: np.ndarray,
    side: RenewalSide,
    grid: np.ndarray,
    span: Optional[float],
) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper renewal values on the grid from a sample of ladder heights"""
    strict = side == RenewalSide.v
    if span is not None:
        units = np.rint(heights / span).astype(np.int64)
        imax = int(round(grid[-1] / span))
        pmf = np.bincount(units, minlength=1).astype(float) / units.size
        counts = _renewal_counts(pmf, imax, strict)
        values = _counts_to_table(counts, side)[np.rint(grid / span).astype(np.int64)]
        return values, values

    step = grid[1] - grid[0] if grid.size > 1 else settings.RENEWAL_GRID_STEP
    delta = step / DISCRETIZATION_REFINEMENT
    imax = int(math.ceil(grid[-1] / delta)) + 1
    if strict:
        idx = np.ceil(grid / delta - SPAN_TOL).astype(np.int64)
    else:
        idx = np.floor(grid / delta + SPAN_TOL).astype(np.int64)
    bounds = []
    for rounding in (np.floor, np.ceil):
        units = rounding(heights / delta).astype(np.int64)
        units = units[units <= imax]
        kept = np.bincount(units, minlength=1).astype(float) / heights.size
        counts = _renewal_counts(kept, imax, strict)
        bounds.append(_counts_to_table(counts, side)[idx])
    upper, lower = bounds
    return lower, upper


def _ladder_table(
    env: EnvironmentLaw,
    side: RenewalSide,
    grid: np.ndarray,
    span: Optional[float],
    reps: int,
    seed: int,
    workers: Optional[int],
    time_cap: int,
) -> RenewalTable:
    blocks = run_blocks(_ladder_kernel, f"renewal-{side.value}-ladder", reps, seed, workers, env=env, side=side, time_cap=time_cap)
    heights = np.concatenate(blocks)
    observed = heights[~np.isnan(heights)]
    censored = 1.0 - observed.size / heights.size
    if observed.size == 0:
        raise RuntimeError(f"no ladder epoch observed within {time_cap} steps")
    if censored > 0.01:
        logger.warning(f"renewal {side.value}: {censored:.2%} of ladder replicas censored at time {time_cap}")

    lower, upper = _bracket_from_heights(observed, side, grid, span)
    estimate = 0.5 * (lower + upper)

    batches = np.array_split(observed, min(LADDER_BATCHES, observed.size))
    if len(batches) > 1:
        batch_values = np.array([0.5 * sum(_bracket_from_heights(b, side, grid, span)) for b in batches])
        stderr = batch_values.std(axis=0, ddof=1) / math.sqrt(len(batches))
    else:
        stderr = np.zeros_like(estimate)
    bias = 0.5 * (upper - lower) + censored * estimate ** 2
    return RenewalTable(
        side=side,
        grid=grid,
        estimate=estimate,
        stderr=stderr,
        bias=bias,
        K=time_cap,
        method=RenewalMethod.ladder,
        span=span,
        details={"reps": reps, "censored_fraction": censored, "time_cap": time_cap},
    )


# =============================================================================
# PUBLIC BUILDERS
# =============================================================================

def build_renewal_table(
    env: EnvironmentLaw,
    side: RenewalSide,
    xmax: float,
    reps: int,
    seed: int,
    K: Optional[int] = None,
    method: RenewalMethod = RenewalMethod.series,
    step: Optional[float] = None,
    workers: Optional[int] = None,
    time_cap: Optional[int] = None,
) -> RenewalTable:
    """
    Renewal table for |x| in [0, xmax] under the law of env (pass the
    tilted environment).
    """
    K = settings.RENEWAL_K if K is None else K
    time_cap = settings.LADDER_TIME_CAP if time_cap is None else time_cap
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    grid, span = _table_grid(env, abs(xmax), step)
    logger.info(f"Building {method.value} renewal table {side.value}: {grid.size} points, reps={reps}")
    if method == RenewalMethod.series:
        return _series_table(env, side, grid, span, K, reps, seed, workers)
    return _ladder_table(env, side, grid, span, reps, seed, workers, time_cap)


def renewal_u(env: EnvironmentLaw, x: float, K: int, reps: int, seed: int, workers: Optional[int] = None):
    """Series estimate of u(x), x >= 0, as an Estimate"""
    if x < 0.0:
        raise ValueError(f"u is defined for x >= 0, got {x}")
    table = _series_table(env, RenewalSide.u, np.array([0.0, x]) if x > 0 else np.array([0.0]), None, K, reps, seed, workers)
    i = table.grid.size - 1
    return Estimate(
        value=float(table.estimate[i]),
        stderr=float(table.stderr[i]),
        reps=reps,
        method=EstimatorMethod.mc,
        details={"x": x, "K": K, "K_term": float(table.bias[i]), "tail_estimate": table.details["tail_estimate"][i]},
    )


def renewal_v(env: EnvironmentLaw, x: float, K: int, reps: int, seed: int, workers: Optional[int] = None):
    """Series estimate of v(x), x <= 0, as an Estimate"""
    if x > 0.0:
        raise ValueError(f"v is defined for x <= 0, got {x}")
    r = -x
    table = _series_table(env, RenewalSide.v, np.array([0.0, r]) if r > 0 else np.array([0.0]), None, K, reps, seed, workers)
    i = table.grid.size - 1
    return Estimate(
        value=float(table.estimate[i]),
        stderr=float(table.stderr[i]),
        reps=reps,
        method=EstimatorMethod.mc,
        details={"x": x, "K": K, "K_term": float(table.bias[i]), "tail_estimate": table.details["tail_estimate"][i]},
    )


# =============================================================================
# HARMONIC IDENTITY AND SUBADDITIVITY
# =============================================================================

@dataclass
class HarmonicResult:
    x: float
    lhs: float
    rhs: float
    z: float

    def to_dict(self) -> Dict[str, float]:
        return {"x": self.x, "lhs": self.lhs, "rhs": self.rhs, "z": self.z}


def harmonic_check(env: EnvironmentLaw, x: float, table: RenewalTable) -> HarmonicResult:
    """
    E[u(x+X); x+X >= 0] = u(x) for x >= 0, or E[v(x+X); x+X < 0] = v(x)
    for x <= 0, with the expectation an exact sum over the atoms of env.

    The z-score uses the table's stderr and bias bars at every point
    involved (treated as fully correlated).
    """
    w = env.weights()
    y = x + env.log_means()
    if table.side == RenewalSide.u:
        keep = y >= 0.0
    else:
        keep = y < 0.0
    values = np.where(keep, table(y), 0.0)
    bars = np.where(keep, table.uncertainty(y), 0.0)
    lhs = math.fsum(w * values)
    rhs = float(table(x))
    spread = math.fsum(w * bars) + float(table.uncertainty(x))
    diff = lhs - rhs
    if spread == 0.0:
        z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(rhs)) else math.copysign(math.inf, diff)
    else:
        z = diff / spread
    return HarmonicResult(x=float(x), lhs=lhs, rhs=rhs, z=z)


def subadditivity_check(table: RenewalTable) -> Dict[str, Any]:
    """
    Largest excess of u(r+s) over u(r) + u(s) on grid pairs, in units of
    the combined bars. Renewal functions are subadditive.
    """
    values = table.estimate
    bars = table.stderr + table.bias
    n = values.size
    worst = -math.inf
    worst_pair = None
    for i in range(n):
        for j in range(i, n - i):
            excess = values[i + j] - values[i] - values[j]
            slack = 3.0 * (bars[i + j] + bars[i] + bars[j]) + 1e-12
            score = excess - slack
            if score > worst:
                worst, worst_pair = score, (float(table.grid[i]), float(table.grid[j]))
    return {"passed": worst <= 0.0, "worst_excess": worst, "pair": worst_pair}


# =============================================================================
# BOUNDARY LAWS
# =============================================================================

class BoundaryKind(str, enum.Enum):
    mu = "mu"   # c1 e^{-theta z} u(z) dz on z >= 0
    nu = "nu"   # c2 e^{theta z} v(z) dz on z < 0


@dataclass(frozen=True)
class BoundaryLaw:
    """
    Probability law with density c e^{-theta |z|} T(z) on the table's
    half-line. `inverse_normalizer` is the integral 1/c and
    `inverse_normalizer_bar` its propagated uncertainty.
    """
    theta: float
    which: BoundaryKind
    table: RenewalTable
    inverse_normalizer: float
    inverse_normalizer_bar: float
    zcut: float
    extrapolated: bool

    @property
    def normalizer(self) -> float:
        return 1.0 / self.inverse_normalizer

    def _nodes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Magnitudes r, exponential weights and table values for quadrature"""
        return _quadrature_nodes(self.table, self.theta, self.zcut)

    def density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.normalizer * np.exp(-self.theta * np.abs(z)) * self.table(z)

    def expect(self, f) -> float:
        """E[f(Z)] for Z with this law, f taking natural coordinates"""
        r, weights, values = self._nodes()
        z = r if self.which == BoundaryKind.mu else -r
        return self.normalizer * _integrate(self.table, r, weights * values * np.asarray(f(z), dtype=float))

    def total_mass(self) -> float:
        return self.expect(lambda z: np.ones_like(z))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "which": self.which.value,
            "normalizer": self.normalizer,
            "inverse_normalizer": self.inverse_normalizer,
            "inverse_normalizer_bar": self.inverse_normalizer_bar,
            "zcut": self.zcut,
            "extrapolated": self.extrapolated,
        }


def _quadrature_nodes(table: RenewalTable, theta: float, zcut: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Step tables: sub-cell midpoints with exact exponential cell weights,
    so cells never straddle a jump. Interpolated tables: trapezoid nodes
    with pointwise e^{-theta r}.
    """
    delta = table.step / QUADRATURE_REFINEMENT
    cells = int(math.ceil(zcut / delta))
    if table.is_step_function:
        left = np.arange(cells) * delta
        mid = left + delta / 2
        weights = (np.exp(-theta * left) - np.exp(-theta * (left + delta))) / theta
        values = table._magnitude_lookup(table.estimate, mid)
        return mid, weights, values
    r = np.arange(cells + 1) * delta
    return r, np.exp(-theta * r), table._magnitude_lookup(table.estimate, r)


def _integrate(table: RenewalTable, r: np.ndarray, integrand: np.ndarray) -> float:
    if table.is_step_function:
        return float(math.fsum(integrand))
    return float(integrate.trapezoid(integrand, r))


def _exp_weighted_integral(table: RenewalTable, theta: float, zcut: float) -> float:
    r, weights, values = _quadrature_nodes(table, theta, zcut)
    return _integrate(table, r, weights * values)


def boundary_cutoff(table: RenewalTable, theta: float) -> float:
    """Smallest grid-aligned r with e^{-theta r} T(r) below the renewal cutoff"""
    r = table.step
    while math.exp(-theta * r) * float(table._magnitude_lookup(table.estimate, np.array([r]))[0]) >= settings.RENEWAL_CUTOFF:
        r += table.step
        if r > 1e6:
            break
    return r


def boundary_law(table: RenewalTable, theta: float) -> BoundaryLaw:
    """
    mu_theta from a u-table or nu_theta from a v-table.

    The domain is cut where e^{-theta |z|} T(z) < RENEWAL_CUTOFF; beyond
    the table range T is extrapolated linearly.
    """
    if theta <= 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    zcut = boundary_cutoff(table, theta)
    inverse = _exp_weighted_integral(table, theta, zcut)
    r, weights, _ = _quadrature_nodes(table, theta, zcut)
    bars = table._magnitude_lookup(table.stderr, r) + table._magnitude_lookup(table.bias, r)
    inverse_bar = _integrate(table, r, weights * bars)
    extrapolated = zcut > table.rmax
    if extrapolated:
        logger.debug(f"boundary law theta={theta}: cutoff {zcut:.3g} beyond table range {table.rmax:.3g}, extrapolating")
    which = BoundaryKind.mu if table.side == RenewalSide.u else BoundaryKind.nu
    return BoundaryLaw(
        theta=theta,
        which=which,
        table=table,
        inverse_normalizer=inverse,
        inverse_normalizer_bar=inverse_bar,
        zcut=zcut,
        extrapolated=extrapolated,
    )
