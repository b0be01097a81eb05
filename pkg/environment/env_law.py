"""
Environment Law - finite-atom distribution of the random offspring law Q

An EnvironmentLaw is a list of (weight, OffspringLaw) atoms. Environments
Pi = (Q_1, Q_2, ...) are i.i.d. draws of atom indices; the associated
random walk has increments X = log m(Q).
"""
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from environment.offspring import OffspringLaw
from errors import EnvironmentConfigError

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12
PARSER_WEIGHT_TOL = 1e-9
LATTICE_MAX_DENOMINATOR = 64
LATTICE_TOL = 1e-9


class EnvironmentAtom(BaseModel):
    """One atom of the environment law"""
    model_config = ConfigDict(frozen=True)

    weight: float = Field(gt=0.0, le=1.0)
    law: OffspringLaw


class EnvironmentLaw(BaseModel):
    """
    Finite-atom law of Q.

    A1 needs one atom with X > 0 and one with X < 0; that is reported by
    `assumption_report` and enforced by the tilt solver rather than here, so
    degenerate environments stay usable for sanity runs.
    """
    model_config = ConfigDict(frozen=True)

    atoms: Tuple[EnvironmentAtom, ...]

    @model_validator(mode="after")
    def _check_weights(self) -> "EnvironmentLaw":
        if not self.atoms:
            raise ValueError("environment needs at least one atom")
        total = math.fsum(a.weight for a in self.atoms)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"atom weights sum to {total!r}, not 1")
        return self

    @classmethod
    def from_atoms(cls, weights: Sequence[float], laws: Sequence[OffspringLaw]) -> "EnvironmentLaw":
        if len(weights) != len(laws):
            raise ValueError("weights and laws differ in length")
        return cls(atoms=tuple(EnvironmentAtom(weight=float(w), law=q) for w, q in zip(weights, laws)))

    def with_weights(self, weights: Sequence[float]) -> "EnvironmentLaw":
        """Same atom laws, new weights (used by the tilt)"""
        return EnvironmentLaw.from_atoms(weights, [a.law for a in self.atoms])

    # ------------------------------------------------------------------
    # vectors
    # ------------------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def laws(self) -> List[OffspringLaw]:
        return [a.law for a in self.atoms]

    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms])

    def log_means(self) -> np.ndarray:
        """X_i = log m(q_i) per atom"""
        return np.array([a.law.log_mean() for a in self.atoms])

    def mean_log_mean(self) -> float:
        """E[X]"""
        return math.fsum(a.weight * a.law.log_mean() for a in self.atoms)

    def annealed_mean(self) -> float:
        """E[m(Q)], the one-step annealed mean"""
        return math.fsum(a.weight * a.law.mean() for a in self.atoms)

    def is_all_geometric(self) -> bool:
        return all(a.law.kind.value == "geometric" for a in self.atoms)

    def max_support(self) -> Optional[int]:
        """Largest offspring count of any atom, or None if some atom has unbounded support"""
        supports = [a.law.support_max() for a in self.atoms]
        if any(s is None for s in supports):
            return None
        return max(supports)

    # ------------------------------------------------------------------
    # lattice structure
    # ------------------------------------------------------------------

    def lattice_span(self) -> Optional[float]:
        """
        Span h of the smallest lattice b + hZ carrying X, or None when the
        X-values are incommensurable (non-lattice).

        A single atom returns 0.0 (degenerate walk).
        """
        xs = np.unique(self.log_means())
        if xs.size == 1:
            return 0.0
        return _common_span(xs[1:] - xs[0])

    def is_lattice(self) -> bool:
        return self.lattice_span() is not None

    def value_span(self) -> Optional[float]:
        """
        Span h with every X_i in hZ (so every partial sum lies on hZ), or
        None. Renewal tables align their grid to this span.
        """
        xs = self.log_means()
        nonzero = xs[xs != 0.0]
        if nonzero.size == 0:
            return None
        return _common_span(nonzero)

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def sample_environment(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n i.i.d. atom indices drawn with the atom weights"""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return self.sample_matrix(1, n, rng)[0]

    def sample_matrix(self, reps: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """(reps, n) array of atom indices, one environment per row"""
        if self.n_atoms == 1:
            return np.zeros((reps, n), dtype=np.int64)
        cdf = np.cumsum(self.weights())
        cdf[-1] = 1.0
        u = rng.random((reps, n))
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def to_config(self) -> Dict[str, Any]:
        return {"atoms": [{"weight": a.weight, "law": a.law.to_config()} for a in self.atoms]}

    def describe(self) -> str:
        parts = [f"{a.weight:.4g}*{a.law.label()}" for a in self.atoms]
        return " + ".join(parts)


# =============================================================================
# PARSER
# =============================================================================

def parse_environment(data: Dict[str, Any]) -> EnvironmentLaw:
    """
    Parse the JSON form {"atoms": [{"weight": w, "law": {...}}, ...]}.

    Weights must sum to 1 within 1e-9; they are then renormalized so the
    resulting law meets its 1e-12 invariant.
    """
    if not isinstance(data, dict) or "atoms" not in data:
        raise EnvironmentConfigError("environment config needs an 'atoms' list")
    raw_atoms = data["atoms"]
    if not isinstance(raw_atoms, list) or not raw_atoms:
        raise EnvironmentConfigError("'atoms' must be a non-empty list")

    weights: List[float] = []
    laws: List[OffspringLaw] = []
    for i, raw in enumerate(raw_atoms):
        try:
            weight = float(raw["weight"])
        except (KeyError, TypeError, ValueError) as e:
            raise EnvironmentConfigError(f"atoms[{i}].weight: {e}") from e
        if weight <= 0.0:
            raise EnvironmentConfigError(f"atoms[{i}].weight must be > 0, got {weight}")
        try:
            law = OffspringLaw.from_config(raw["law"])
        except (KeyError, TypeError) as e:
            raise EnvironmentConfigError(f"atoms[{i}].law: missing field {e}") from e
        except (ValidationError, ValueError) as e:
            raise EnvironmentConfigError(f"atoms[{i}].law: {e}") from e
        weights.append(weight)
        laws.append(law)

    total = math.fsum(weights)
    if abs(total - 1.0) > PARSER_WEIGHT_TOL:
        raise EnvironmentConfigError(f"atom weights sum to {total!r}, expected 1 within {PARSER_WEIGHT_TOL}")
    weights = [w / total for w in weights]
    env = EnvironmentLaw.from_atoms(weights, laws)
    logger.debug(f"Parsed environment with {env.n_atoms} atoms: {env.describe()}")
    return env


def load_environment(path: Union[str, Path]) -> EnvironmentLaw:
    """Read and parse an environment JSON file"""
    path = Path(path)
    if not path.exists():
        raise EnvironmentConfigError(f"environment file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise EnvironmentConfigError(f"{path}: invalid JSON ({e})") from e
    return parse_environment(data)


# =============================================================================
# ASSUMPTION REPORT
# =============================================================================

@dataclass
class MomentReport:
    """Per-atom moments and aggregate walk moments"""
    log_means: List[float]
    etas: List[float]
    zetas: List[float]
    weights: List[float]
    a: int
    mean_x: float

    def tilted_moment(self, beta: float, power: int = 1) -> float:
        """E[X^power e^{beta X}] under the original weights"""
        return math.fsum(w * x ** power * math.exp(beta * x) for w, x in zip(self.weights, self.log_means))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "log_means": self.log_means,
            "etas": self.etas,
            "zetas": self.zetas,
            "weights": self.weights,
            "mean_x": self.mean_x,
        }


@dataclass
class AssumptionReport:
    """Feasibility of the weakly subcritical assumptions for one environment"""
    moments: MomentReport
    alpha: float
    phi_at_0: float
    phi_at_1: float
    a1_feasible: bool
    a3_finite: bool
    a3_statistic: float
    lattice: bool
    messages: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "moments": self.moments.to_dict(),
            "alpha": self.alpha,
            "phi_at_0": self.phi_at_0,
            "phi_at_1": self.phi_at_1,
            "a1_feasible": self.a1_feasible,
            "a3_finite": self.a3_finite,
            "a3_statistic": self.a3_statistic,
            "lattice": self.lattice,
            "messages": self.messages,
        }


def assumption_report(env: EnvironmentLaw, a: int = 1, alpha: float = 2.0) -> AssumptionReport:
    """
    Check A1 (sign change of phi on (0,1)) and report A3.

    A3 is always finite for finitely many atoms; its statistic
    E[(log+ zeta(a))^alpha] is reported under the original weights.
    """
    laws = env.laws
    moments = MomentReport(
        log_means=[q.log_mean() for q in laws],
        etas=[q.eta() for q in laws],
        zetas=[q.zeta(a) for q in laws],
        weights=env.weights().tolist(),
        a=a,
        mean_x=env.mean_log_mean(),
    )
    phi0 = moments.tilted_moment(0.0)
    phi1 = moments.tilted_moment(1.0)
    messages: List[str] = []
    if phi0 >= 0.0:
        messages.append(f"E[X] = {phi0:.6g} >= 0: not subcritical")
    if phi1 <= 0.0:
        messages.append(f"phi(1) = {phi1:.6g} <= 0: no root of E[X e^(bX)] in (0,1)")
    feasible = phi0 < 0.0 < phi1

    a3_stat = math.fsum(
        w * max(math.log(z), 0.0) ** alpha if z > 0.0 else 0.0
        for w, z in zip(moments.weights, moments.zetas)
    )
    report = AssumptionReport(
        moments=moments,
        alpha=alpha,
        phi_at_0=phi0,
        phi_at_1=phi1,
        a1_feasible=feasible,
        a3_finite=True,
        a3_statistic=a3_stat,
        lattice=env.is_lattice(),
        messages=messages,
    )
    if not feasible:
        logger.info(f"A1 infeasible: {'; '.join(messages)}")
    return report


def _common_span(values: np.ndarray) -> Optional[float]:
    """Largest h with every value an integer multiple of h, found by rationalizing ratios"""
    values = np.asarray(values, dtype=float)
    base = float(values[np.argmin(np.abs(values))])
    if base == 0.0:
        return None
    numerators: List[int] = []
    denominators: List[int] = []
    for v in values:
        ratio = float(v) / base
        frac = Fraction(ratio).limit_denominator(LATTICE_MAX_DENOMINATOR)
        if abs(ratio - float(frac)) > LATTICE_TOL:
            return None
        numerators.append(frac.numerator)
        denominators.append(frac.denominator)
    lcm = 1
    for d in denominators:
        lcm = lcm * d // math.gcd(lcm, d)
    gcd = 0
    for num, den in zip(numerators, denominators):
        gcd = math.gcd(gcd, abs(num * (lcm // den)))
    return abs(base) * gcd / lcm
