"""
Associated random walk: paths, duality and path functionals

S_0 = x, S_k = S_{k-1} + X_k with X_k = log m(Q_k). Path statistics follow
the conventions

    L_n = min(S_1..S_n),  M_n = max(S_1..S_n),
    tau_n = first index attaining min(S_0..S_n),

with L_0 = +inf and M_0 = -inf (empty extrema).

Functionals act on blocks of partial sums of shape (B, n+1) and are plain
module-level classes so they pickle into worker processes.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from environment.env_law import EnvironmentLaw
from errors import DualityError

logger = logging.getLogger(__name__)


# =============================================================================
# WALK PATH
# =============================================================================

@dataclass(frozen=True)
class WalkPath:
    """One realized walk S_0..S_n with cached extrema"""
    increments: np.ndarray
    sums: np.ndarray
    min_after_start: float = field(init=False)
    max_after_start: float = field(init=False)
    tau: int = field(init=False)

    def __post_init__(self):
        if self.sums.size != self.increments.size + 1:
            raise ValueError("sums must have one more entry than increments")
        tail = self.sums[1:]
        object.__setattr__(self, "min_after_start", float(tail.min()) if tail.size else math.inf)
        object.__setattr__(self, "max_after_start", float(tail.max()) if tail.size else -math.inf)
        object.__setattr__(self, "tau", int(np.argmin(self.sums)))

    @classmethod
    def from_increments(cls, increments: Sequence[float], start: float = 0.0) -> "WalkPath":
        x = np.asarray(increments, dtype=float)
        sums = np.concatenate([[start], start + np.cumsum(x)])
        return cls(increments=x, sums=sums)

    @property
    def n(self) -> int:
        return int(self.increments.size)

    @property
    def start(self) -> float:
        return float(self.sums[0])

    @property
    def end(self) -> float:
        return float(self.sums[-1])

    @property
    def L(self) -> float:
        return self.min_after_start

    @property
    def M(self) -> float:
        return self.max_after_start

    def first_min_at_end(self) -> bool:
        """tau_n = n, i.e. S_n < S_j for every j < n"""
        return self.n == 0 or bool(self.sums[-1] < self.sums[:-1].min())

    def to_dict(self) -> dict:
        return {"sums": self.sums.tolist(), "L": self.L, "M": self.M, "tau": self.tau}


def simulate_walk(env: EnvironmentLaw, n: int, rng: np.random.Generator, start: float = 0.0) -> WalkPath:
    """One path of length n with i.i.d. increments log m(Q)"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    atoms = env.sample_environment(n, rng)
    return WalkPath.from_increments(env.log_means()[atoms], start=start)


def simulate_walks(env: EnvironmentLaw, reps: int, n: int, rng: np.random.Generator, start: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    A (reps, n) block of atom indices and the matching (reps, n+1) partial sums.
    """
    atoms = env.sample_matrix(reps, n, rng)
    return atoms, partial_sums(env.log_means()[atoms], start)


def partial_sums(increments: np.ndarray, start: float = 0.0) -> np.ndarray:
    inc = np.atleast_2d(increments)
    lead = np.full((inc.shape[0], 1), float(start))
    return np.concatenate([lead, start + np.cumsum(inc, axis=1)], axis=1)


# =============================================================================
# DUALITY
# =============================================================================

def dual_path(path: WalkPath) -> WalkPath:
    """
    Reversed path S'_i = S_n - S_{n-i}.

    The dual sums are taken from the primal sums, so comparisons such as
    {M'_n < 0} <=> {tau_n = n} agree path by path.
    """
    if path.start != 0.0:
        raise DualityError(f"dual path needs S_0 = 0, got {path.start}")
    return WalkPath(increments=path.increments[::-1].copy(), sums=path.end - path.sums[::-1])


def dual_sums(sums: np.ndarray) -> np.ndarray:
    """Row-wise dual of a (B, n+1) block with S_0 = 0"""
    sums = np.atleast_2d(sums)
    if np.any(sums[:, 0] != 0.0):
        raise DualityError("dual needs every path to start at 0")
    return sums[:, -1:] - sums[:, ::-1]


# =============================================================================
# EVENTS
# =============================================================================

def min_nonneg(sums: np.ndarray) -> np.ndarray:
    """1{L_n >= 0}"""
    if sums.shape[1] == 1:
        return np.ones(sums.shape[0], dtype=bool)
    return sums[:, 1:].min(axis=1) >= 0.0


def max_neg(sums: np.ndarray) -> np.ndarray:
    """1{M_n < 0}"""
    if sums.shape[1] == 1:
        return np.ones(sums.shape[0], dtype=bool)
    return sums[:, 1:].max(axis=1) < 0.0


def first_min_at_end(sums: np.ndarray) -> np.ndarray:
    """1{tau_n = n}: strict first minimum at the last step"""
    if sums.shape[1] == 1:
        return np.ones(sums.shape[0], dtype=bool)
    return sums[:, -1] < sums[:, :-1].min(axis=1)


# =============================================================================
# GRID FUNCTIONS AND PATH FUNCTIONALS
# =============================================================================

class GridFunction(BaseModel):
    """
    Bounded function given by values on an increasing grid, evaluated by
    linear interpolation and held constant outside the grid.
    """
    model_config = ConfigDict(frozen=True)

    x: Tuple[float, ...]
    y: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_grid(self) -> "GridFunction":
        if len(self.x) != len(self.y) or len(self.x) < 1:
            raise ValueError("grid and values must be non-empty and of equal length")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("grid must be strictly increasing")
        if not all(math.isfinite(v) for v in self.y):
            raise ValueError("grid function must be finite")
        return self

    @classmethod
    def constant(cls, value: float) -> "GridFunction":
        return cls(x=(0.0,), y=(float(value),))

    @classmethod
    def exponential(cls, rate: float, lo: float, hi: float, step: float = 0.01) -> "GridFunction":
        """s -> e^{rate * s} tabulated on [lo, hi]"""
        grid = np.arange(lo, hi + step / 2, step)
        return cls(x=tuple(grid.tolist()), y=tuple(np.exp(rate * grid).tolist()))

    def __call__(self, s) -> np.ndarray:
        return np.interp(s, np.asarray(self.x), np.asarray(self.y))

    def sup(self) -> float:
        return max(abs(v) for v in self.y)


@dataclass(frozen=True)
class ExpMinNonneg:
    """phi(S_n) e^{-theta S_n} 1{L_n >= 0}"""
    theta: float = 0.0
    phi: Optional[GridFunction] = None

    def __call__(self, sums: np.ndarray) -> np.ndarray:
        end = sums[:, -1]
        hit = min_nonneg(sums)
        value = np.where(hit, np.exp(-self.theta * np.where(hit, end, 0.0)), 0.0)
        return value * self.phi(end) if self.phi is not None else value


@dataclass(frozen=True)
class ExpMaxNeg:
    """phi(S_n) e^{theta S_n} 1{M_n < 0}"""
    theta: float = 0.0
    phi: Optional[GridFunction] = None

    def __call__(self, sums: np.ndarray) -> np.ndarray:
        end = sums[:, -1]
        hit = max_neg(sums)
        value = np.where(hit, np.exp(self.theta * np.where(hit, end, 0.0)), 0.0)
        return value * self.phi(end) if self.phi is not None else value


@dataclass(frozen=True)
class ExpFirstMin:
    """e^{theta S_n} 1{tau_n = n}"""
    theta: float = 0.0

    def __call__(self, sums: np.ndarray) -> np.ndarray:
        hit = first_min_at_end(sums)
        return np.where(hit, np.exp(self.theta * np.where(hit, sums[:, -1], 0.0)), 0.0)


@dataclass(frozen=True)
class ExpEnd:
    """e^{theta S_n}"""
    theta: float = 0.0

    def __call__(self, sums: np.ndarray) -> np.ndarray:
        return np.exp(self.theta * sums[:, -1])


@dataclass(frozen=True)
class ExpEndNeg:
    """e^{theta S_n} 1{S_n < 0}"""
    theta: float = 0.0

    def __call__(self, sums: np.ndarray) -> np.ndarray:
        end = sums[:, -1]
        hit = end < 0.0
        return np.where(hit, np.exp(self.theta * np.where(hit, end, 0.0)), 0.0)


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, sums: np.ndarray) -> np.ndarray:
        return np.full(sums.shape[0], self.value)
