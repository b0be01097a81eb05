"""
Exponential Tilting - solve E[X e^{beta X}] = 0 and build the tilted law

Under the weakly subcritical assumption the equation phi(beta) = 0 has a
root in (0, 1). Reweighting every atom by e^{beta X}/gamma with
gamma = E[e^{beta X}] turns the associated walk into a driftless one, and
for any path functional h of the first n steps

    E[h] = gamma^n * E_tilted[h * e^{-beta S_n}].
"""
from typing import Callable, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize

from config import settings
from environment.env_law import EnvironmentLaw
from errors import DomainError, NoRoot, NotSubcritical, SizeLimit
from oracle.enumeration import iter_sequence_blocks

logger = logging.getLogger(__name__)

# h(S) for a block of paths S of shape (B, n+1), S[:, 0] = 0
PathFunctional = Callable[[np.ndarray], np.ndarray]


class TiltSolution(BaseModel):
    """Root of phi together with gamma and the tilted atom weights"""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0.0, lt=1.0)
    gamma: float = Field(gt=0.0)
    tilted_weights: Tuple[float, ...]
    residual: float = Field(ge=0.0, description="|phi(beta)| achieved")
    log_means: Tuple[float, ...] = Field(description="X_i per atom, echoed for moment helpers")

    @property
    def log_gamma(self) -> float:
        return math.log(self.gamma)

    def tilted_mean(self) -> float:
        """E_tilted[X], zero up to solver tolerance"""
        return math.fsum(w * x for w, x in zip(self.tilted_weights, self.log_means))

    def tilted_variance(self) -> float:
        mean = self.tilted_mean()
        return math.fsum(w * (x - mean) ** 2 for w, x in zip(self.tilted_weights, self.log_means))

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "tilted_weights": list(self.tilted_weights),
            "residual": self.residual,
            "tilted_sigma": math.sqrt(self.tilted_variance()),
        }


class StableNorm(BaseModel):
    """
    Norming constants a_n = sigma * n^{1/alpha} and b_n = 1/(a_n n).

    With alpha = 2 and sigma the tilted standard deviation the local limit
    density at 0 is 1/sqrt(2 pi). For alpha < 2 both sigma and s0 must be
    supplied by the caller.
    """
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=2.0, gt=1.0, le=2.0)
    sigma: float = Field(gt=0.0)
    s0: Optional[float] = Field(default=None, gt=0.0, description="limiting density at 0")

    @model_validator(mode="before")
    @classmethod
    def _default_density(cls, data):
        if isinstance(data, dict) and data.get("s0") is None:
            if float(data.get("alpha", 2.0)) != 2.0:
                raise ValueError("alpha < 2 needs an explicit s0 (limiting stable density at 0)")
            data = {**data, "s0": 1.0 / math.sqrt(2.0 * math.pi)}
        return data

    @classmethod
    def from_solution(cls, solution: TiltSolution) -> "StableNorm":
        return cls(alpha=2.0, sigma=math.sqrt(solution.tilted_variance()))

    def a_n(self, n: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        return self.sigma * np.power(np.asarray(n, dtype=float), 1.0 / self.alpha)

    def log_a_n(self, n: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        return math.log(self.sigma) + np.log(np.asarray(n, dtype=float)) / self.alpha

    def b_n(self, n: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        n_arr = np.asarray(n, dtype=float)
        return 1.0 / (self.a_n(n_arr) * n_arr)


# =============================================================================
# ROOT FINDING
# =============================================================================

def phi(env: EnvironmentLaw, beta: float) -> float:
    """phi(beta) = sum_i w_i X_i e^{beta X_i}"""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0,1], got {beta}")
    return _phi(env.weights(), env.log_means(), beta)


def _phi(w: np.ndarray, x: np.ndarray, beta: float) -> float:
    return math.fsum(w * x * np.exp(beta * x))


def _dphi(w: np.ndarray, x: np.ndarray, beta: float) -> float:
    return math.fsum(w * x * x * np.exp(beta * x))


def solve_beta(env: EnvironmentLaw, tol: Optional[float] = None) -> TiltSolution:
    """
    Solve phi(beta) = 0 on (0, 1).

    Bisection on the sign-change bracket [0, 1] to width 1e-13, then one
    Newton step kept only if it lowers |phi|.

    Raises:
        NotSubcritical: E[X] >= 0
        NoRoot: phi(1) <= 0
    """
    tol = settings.TILT_TOL if tol is None else tol
    w = env.weights()
    x = env.log_means()

    phi0 = _phi(w, x, 0.0)
    if phi0 >= 0.0:
        raise NotSubcritical(f"E[X] = {phi0!r} >= 0")
    phi1 = _phi(w, x, 1.0)
    if phi1 <= 0.0:
        raise NoRoot(f"phi(1) = {phi1!r} <= 0, no sign change on (0,1)")

    beta = optimize.bisect(lambda b: _phi(w, x, b), 0.0, 1.0, xtol=settings.TILT_BRACKET_WIDTH, maxiter=200)
    residual = abs(_phi(w, x, beta))

    # Newton polish
    slope = _dphi(w, x, beta)
    if slope > 0.0:
        polished = beta - _phi(w, x, beta) / slope
        if 0.0 < polished < 1.0 and abs(_phi(w, x, polished)) <= residual:
            beta = polished
            residual = abs(_phi(w, x, beta))

    if residual > tol:
        logger.warning(f"solve_beta residual {residual:.3e} above tol {tol:.1e}")

    gamma = math.fsum(w * np.exp(beta * x))
    tilted = tilt_weights(env, beta)
    logger.debug(f"Tilt solved: beta={beta:.15g} gamma={gamma:.15g} residual={residual:.2e}")
    return TiltSolution(
        beta=beta,
        gamma=gamma,
        tilted_weights=tuple(tilted.tolist()),
        residual=residual,
        log_means=tuple(x.tolist()),
    )


def tilt_weights(env: EnvironmentLaw, beta: float) -> np.ndarray:
    """w_i e^{beta X_i} / E[e^{beta X}]"""
    raw = env.weights() * np.exp(beta * env.log_means())
    return raw / math.fsum(raw)


def tilted_env(env: EnvironmentLaw, solution: TiltSolution) -> EnvironmentLaw:
    """Same atoms, weights replaced by the tilted weights"""
    if len(solution.tilted_weights) != env.n_atoms:
        raise ValueError("solution does not match environment atom count")
    return env.with_weights(solution.tilted_weights)


# =============================================================================
# CHANGE OF MEASURE
# =============================================================================

def change_of_measure_check(
    env: EnvironmentLaw,
    solution: TiltSolution,
    n: int,
    functional: PathFunctional,
    budget: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Exact check of E[h] = gamma^n E_tilted[h e^{-beta S_n}].

    Both sides are finite sums over all atom sequences of length n,
    accumulated with math.fsum.

    Returns:
        (lhs, rhs)
    """
    budget = settings.CHANGE_OF_MEASURE_BUDGET if budget is None else budget
    size = env.n_atoms ** n
    if size > budget:
        raise SizeLimit(size, budget, "change-of-measure enumeration")

    x = env.log_means()
    log_w = np.log(env.weights())
    log_wt = np.log(np.asarray(solution.tilted_weights))
    n_log_gamma = n * solution.log_gamma

    lhs_parts = []
    rhs_parts = []
    for seq in iter_sequence_blocks(env.n_atoms, n):
        steps = x[seq]
        paths = np.concatenate([np.zeros((seq.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)
        h = np.asarray(functional(paths), dtype=float)
        lhs_parts.extend((np.exp(log_w[seq].sum(axis=1)) * h).tolist())
        log_rhs = n_log_gamma + log_wt[seq].sum(axis=1) - solution.beta * paths[:, -1]
        rhs_parts.extend((np.exp(log_rhs) * h).tolist())
    return math.fsum(lhs_parts), math.fsum(rhs_parts)
