"""
Quenched generating-function calculus

For a fixed environment (atom index sequence) the survival probability
q_n = P{Z_n > 0 | Pi} = 1 - f_1(f_2(...f_n(0)...)) is computed in survival
form: with g_k(h) = 1 - f_k(1 - h),

    h_n = 1,   h_{k-1} = g_k(h_k),   q_n = h_0,

carried as log h so that values far below the double range stay exact.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence
import logging
import math

import numpy as np
from scipy.special import logsumexp

from config import settings
from environment.env_law import EnvironmentLaw
from environment.offspring import OffspringKind, OffspringLaw
from errors import DomainError

logger = logging.getLogger(__name__)

LEMMA_SLACK = 1e-12


def walk_from_atoms(env: EnvironmentLaw, atoms: np.ndarray) -> np.ndarray:
    """Partial sums S_0..S_n (S_0 = 0) for one sequence or a (B, n) block"""
    x = env.log_means()[np.asarray(atoms)]
    lead = np.zeros(x.shape[:-1] + (1,))
    return np.concatenate([lead, np.cumsum(x, axis=-1)], axis=-1)


# =============================================================================
# BACKWARD COMPOSITION
# =============================================================================

def compose_pgf_backward(env: EnvironmentLaw, atoms: Sequence[int], s):
    """f_{0,n}(s) = f_1(f_2(...f_n(s)...)), s scalar or array in [0,1]"""
    laws = env.laws
    t = s
    for a in reversed(list(atoms)):
        t = laws[int(a)].pgf(t)
    return t


def log_survival_batch(env: EnvironmentLaw, atoms: np.ndarray, s: float = 0.0) -> np.ndarray:
    """
    log(1 - f_{0,n}(s)) for every row of a (B, n) block of atom sequences.

    Rows may be read as environments under either the original or the
    tilted law; only the atom laws enter.
    """
    if not 0.0 <= s < 1.0:
        raise DomainError(f"s must lie in [0,1) for log-survival, got {s}")
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.int64))
    laws = env.laws
    log_h = np.full(atoms.shape[0], math.log1p(-s))
    for k in range(atoms.shape[1] - 1, -1, -1):
        column = atoms[:, k]
        h = np.exp(log_h)
        step = np.empty_like(log_h)
        for a, law in enumerate(laws):
            mask = column == a
            if np.any(mask):
                step[mask] = law.log_survival_ratio(h[mask])
        log_h = log_h + step
    return log_h


def log_survival_linear_fractional(env: EnvironmentLaw, atoms: np.ndarray, s: float = 0.0) -> np.ndarray:
    """
    Closed form for all-geometric environments:

        1/q_n = sum_{k<n} e^{-S_k} + e^{-S_n}/(1-s)
    """
    if not env.is_all_geometric():
        raise ValueError("closed form needs every atom to be geometric")
    walks = np.atleast_2d(walk_from_atoms(env, np.atleast_2d(atoms)))
    terms = -walks.copy()
    terms[:, -1] -= math.log1p(-s)
    return -logsumexp(terms, axis=1)


# =============================================================================
# QUENCHED RECORD
# =============================================================================

@dataclass
class QuenchedRecord:
    """Quenched quantities of one environment sequence"""
    atoms: np.ndarray
    walk: np.ndarray
    etas: np.ndarray
    log_survival: float
    underflow: bool = False
    pgf_grid: Dict[float, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.atoms.size)

    @property
    def survival(self) -> float:
        """q_n; 0.0 when flagged underflow (use log_survival instead)"""
        return 0.0 if self.underflow else math.exp(self.log_survival)

    def first_moment_bound_holds(self) -> bool:
        """q_n <= exp(min_k S_k)"""
        return self.log_survival <= float(np.min(self.walk)) + LEMMA_SLACK

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "atoms": self.atoms.tolist(),
            "walk": self.walk.tolist(),
            "log_survival": self.log_survival,
            "survival": self.survival,
            "underflow": self.underflow,
            **({"pgf_grid": {str(k): v for k, v in self.pgf_grid.items()}} if self.pgf_grid else {}),
        }


def survival_quenched(
    env: EnvironmentLaw,
    atoms: Sequence[int],
    s_grid: Optional[Sequence[float]] = None,
) -> QuenchedRecord:
    """
    Quenched survival probability of one environment sequence.

    Returns a QuenchedRecord; when q_n < 1e-280 the record is flagged and
    only log_survival is meaningful.
    """
    atoms = np.asarray(atoms, dtype=np.int64)
    log_q = float(log_survival_batch(env, atoms[None, :])[0]) if atoms.size else 0.0
    etas = np.array([env.laws[a].eta() for a in atoms])
    record = QuenchedRecord(
        atoms=atoms,
        walk=walk_from_atoms(env, atoms),
        etas=etas,
        log_survival=log_q,
        underflow=log_q < settings.UNDERFLOW_LOG_THRESHOLD,
    )
    if record.underflow:
        logger.debug(f"Quenched survival underflow: log q_n = {log_q:.6g}")
    if s_grid is not None:
        record.pgf_grid = {float(s): float(compose_pgf_backward(env, atoms, float(s))) for s in s_grid}
    return record


# =============================================================================
# LEMMA CHECKS (forward composition f_{k,0})
# =============================================================================

def _log_pgf(law: OffspringLaw, log_t: float) -> float:
    """log f(t) given log t, exact when t underflows"""
    t = math.exp(log_t)
    if law.kind == OffspringKind.geometric:
        return math.log(law.p) - math.log1p(-(1.0 - law.p) * t)
    if law.kind == OffspringKind.poisson:
        return law.lam * math.expm1(log_t)
    if law.kind == OffspringKind.binary:
        log_zero = math.log(1.0 - law.p) if law.p < 1.0 else -math.inf
        return float(np.logaddexp(log_zero, math.log(law.p) + 2.0 * log_t))
    probs = np.asarray(law.probs)
    with np.errstate(divide="ignore"):
        log_q = np.log(probs)
    powers = np.arange(len(probs)) * log_t
    powers[0] = 0.0
    return float(logsumexp(log_q + powers))


def _log_neg_log_f(log_h: float, log_f: float) -> float:
    """log(-log f) using whichever of h = 1 - f or f is accurate"""
    if log_h < math.log(0.5):
        h = math.exp(log_h)
        if h == 0.0:
            return log_h
        return log_h + math.log(-math.log1p(-h) / h)
    if log_f == -math.inf:
        return math.inf
    return math.log(-log_f)


@dataclass
class LemmaCheckResult:
    """Outcome of the monotonicity, floor and Agresti checks along one environment"""
    n: int
    s: float
    monotone_violations: List[int] = field(default_factory=list)
    floor_violations: List[int] = field(default_factory=list)
    agresti_violations: List[int] = field(default_factory=list)
    min_agresti_gap: float = math.inf
    trace: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (self.monotone_violations or self.floor_violations or self.agresti_violations)

    def witness(self) -> Optional[Dict[str, Any]]:
        if self.passed:
            return None
        return {
            "monotone": self.monotone_violations[:5],
            "floor": self.floor_violations[:5],
            "agresti": self.agresti_violations[:5],
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "s": self.s,
            "passed": self.passed,
            "min_agresti_gap": self.min_agresti_gap,
            "witness": self.witness(),
        }


def lemma_checks(env: EnvironmentLaw, atoms: Sequence[int], s: float, slack: float = LEMMA_SLACK) -> LemmaCheckResult:
    """
    Along the forward composition f_{k,0}(s) = f_k(...f_1(s)...) check

      - e^{-S_k} log f_{k,0}(s) is non-decreasing in k
      - e^{-S_k} log f_{k,0}(s) >= log s
      - e^{-S_k} (1 - f_{k,0}(s)) >= 1 / (1/(1-s) + sum_{i<=k} eta_i e^{S_i})

    All three in log space with relative slack.
    """
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0,1), got {s}")
    atoms = np.asarray(atoms, dtype=np.int64)
    laws = env.laws
    walk = walk_from_atoms(env, atoms)
    result = LemmaCheckResult(n=int(atoms.size), s=s)

    log_h = math.log1p(-s)
    log_f = math.log(s)
    # A_k = log(-e^{-S_k} log f_{k,0}); the sequence must be non-increasing
    prev = _log_neg_log_f(log_h, log_f)
    floor = math.log(-math.log(s))
    agresti_terms = [-math.log1p(-s)]

    for k, a in enumerate(atoms, start=1):
        law = laws[int(a)]
        h = math.exp(log_h)
        log_h = log_h + float(law.log_survival_ratio(h))
        log_f = _log_pgf(law, log_f)
        s_k = float(walk[k])

        current = _log_neg_log_f(log_h, log_f) - s_k
        result.trace.append(current)
        if current > prev + slack * max(1.0, abs(prev)):
            result.monotone_violations.append(k)
        if current > floor + slack * max(1.0, abs(floor)):
            result.floor_violations.append(k)
        prev = current

        eta = law.eta()
        if eta > 0.0:
            agresti_terms.append(math.log(eta) + s_k)
        bound = -float(logsumexp(agresti_terms))
        gap = (log_h - s_k) - bound
        result.min_agresti_gap = min(result.min_agresti_gap, gap)
        if gap < -slack * max(1.0, abs(bound)):
            result.agresti_violations.append(k)

    if not result.passed:
        logger.warning(f"Lemma check violations at s={s}: {result.witness()}")
    return result


# =============================================================================
# ETA SERIES DIAGNOSTIC
# =============================================================================

def eta_series_trace(env: EnvironmentLaw, atoms: np.ndarray) -> np.ndarray:
    """
    Partial sums sum_{i<k} eta_{i+1} e^{-S_i}, k = 1..n, for each row of a
    (B, n) block. Along walks conditioned to stay nonnegative these stay
    bounded.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.int64))
    etas = np.array([q.eta() for q in env.laws])[atoms]
    walks = walk_from_atoms(env, atoms)
    return np.cumsum(etas * np.exp(-walks[:, :-1]), axis=1)
