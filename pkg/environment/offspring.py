"""
Offspring Laws - parametric reproduction laws and their generating-function calculus

Four kinds are supported: geometric (on {0,1,...}, mass p at 0), Poisson,
binary (mass 1-p at 0, p at 2) and explicit finite vectors over 0..K.

Each law exposes its pgf f, the mean m = f'(1), the standardized moments
eta and zeta(a), and the survival map g(h) = 1 - f(1 - h) in a form that
stays accurate when h is tiny.
"""
from typing import Any, Dict, Optional, Tuple, Union
import enum
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from errors import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MAX_EXPLICIT_SUPPORT = 64
NORMALIZATION_TOL = 1e-12
ZETA_TAIL_CUT = 1e-14


class OffspringKind(str, enum.Enum):
    """Offspring law family"""
    geometric = "geometric"
    poisson = "poisson"
    binary = "binary"
    explicit = "explicit"


class OffspringLaw(BaseModel):
    """
    One offspring distribution q.

    `log_mean_value` pins X = log m(q) exactly when the law was configured
    by its log-mean (so walks with X in {-1, +1} stay on the integers).
    """
    model_config = ConfigDict(frozen=True)

    kind: OffspringKind
    p: Optional[float] = Field(default=None, description="geometric success / binary birth probability")
    lam: Optional[float] = Field(default=None, gt=0.0, description="Poisson mean")
    probs: Optional[Tuple[float, ...]] = Field(default=None, description="explicit pmf over 0..K")
    log_mean_value: Optional[float] = None

    @model_validator(mode="after")
    def _check_parameters(self) -> "OffspringLaw":
        if self.kind == OffspringKind.geometric:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ValueError(f"geometric law needs p in (0,1), got {self.p}")
        elif self.kind == OffspringKind.binary:
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ValueError(f"binary law needs p in (0,1], got {self.p}")
        elif self.kind == OffspringKind.poisson:
            if self.lam is None:
                raise ValueError("poisson law needs lam > 0")
        elif self.kind == OffspringKind.explicit:
            if not self.probs:
                raise ValueError("explicit law needs a probability vector")
            if len(self.probs) - 1 > MAX_EXPLICIT_SUPPORT:
                raise ValueError(f"explicit support capped at K <= {MAX_EXPLICIT_SUPPORT}")
            if any(q < 0.0 for q in self.probs):
                raise ValueError("explicit probabilities must be nonnegative")
            total = math.fsum(self.probs)
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ValueError(f"explicit probabilities sum to {total!r}, not 1")
            if self.probs[0] >= 1.0:
                raise ValueError("mass at 0 must be strictly below 1")
        if self.log_mean_value is not None:
            drift = abs(self.log_mean_value - math.log(self._raw_mean()))
            if drift > 1e-9:
                raise ValueError(f"log_mean_value inconsistent with parameters (off by {drift:.3g})")
        return self

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def geometric(cls, p: float) -> "OffspringLaw":
        return cls(kind=OffspringKind.geometric, p=p)

    @classmethod
    def geometric_log_mean(cls, x: float) -> "OffspringLaw":
        """Geometric law with mean e^x, i.e. p = 1 / (1 + e^x)"""
        return cls(kind=OffspringKind.geometric, p=1.0 / (1.0 + math.exp(x)), log_mean_value=x)

    @classmethod
    def poisson(cls, lam: float) -> "OffspringLaw":
        return cls(kind=OffspringKind.poisson, lam=lam)

    @classmethod
    def poisson_log_mean(cls, x: float) -> "OffspringLaw":
        return cls(kind=OffspringKind.poisson, lam=math.exp(x), log_mean_value=x)

    @classmethod
    def binary(cls, p: float) -> "OffspringLaw":
        return cls(kind=OffspringKind.binary, p=p)

    @classmethod
    def explicit(cls, probs) -> "OffspringLaw":
        return cls(kind=OffspringKind.explicit, probs=tuple(float(q) for q in probs))

    @classmethod
    def from_config(cls, data: Dict[str, Any]) -> "OffspringLaw":
        """
        Build a law from its JSON form.

        Accepted shapes:
            {"kind": "geometric", "p": 0.6}
            {"kind": "geometric", "log_mean": -0.4}
            {"kind": "poisson", "lam": 2.5} / {"kind": "poisson", "log_mean": 1.0}
            {"kind": "binary", "p": 0.4}
            {"kind": "explicit", "probs": [0.5, 0.0, 0.5]}
        """
        kind = OffspringKind(data["kind"])
        if "log_mean" in data:
            if kind == OffspringKind.geometric:
                return cls.geometric_log_mean(float(data["log_mean"]))
            if kind == OffspringKind.poisson:
                return cls.poisson_log_mean(float(data["log_mean"]))
            raise ValueError(f"log_mean is only accepted for geometric and poisson laws, not {kind.value}")
        if kind == OffspringKind.explicit:
            return cls.explicit(data["probs"])
        if kind == OffspringKind.poisson:
            return cls.poisson(float(data["lam"]))
        return cls(kind=kind, p=float(data["p"]))

    def to_config(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind.value}
        if self.log_mean_value is not None:
            out["log_mean"] = self.log_mean_value
        elif self.kind == OffspringKind.poisson:
            out["lam"] = self.lam
        elif self.kind == OffspringKind.explicit:
            out["probs"] = list(self.probs)
        else:
            out["p"] = self.p
        return out

    # ------------------------------------------------------------------
    # moments
    # ------------------------------------------------------------------

    def _raw_mean(self) -> float:
        if self.kind == OffspringKind.geometric:
            return (1.0 - self.p) / self.p
        if self.kind == OffspringKind.poisson:
            return self.lam
        if self.kind == OffspringKind.binary:
            return 2.0 * self.p
        return math.fsum(k * q for k, q in enumerate(self.probs))

    def mean(self) -> float:
        """m(q) = f'(1)"""
        return self._raw_mean()

    def log_mean(self) -> float:
        """X = log m(q)"""
        if self.log_mean_value is not None:
            return self.log_mean_value
        return math.log(self._raw_mean())

    def mass_at_zero(self) -> float:
        if self.kind == OffspringKind.geometric:
            return self.p
        if self.kind == OffspringKind.poisson:
            return math.exp(-self.lam)
        if self.kind == OffspringKind.binary:
            return 1.0 - self.p
        return self.probs[0]

    def factorial_moment2(self) -> float:
        """E[Y(Y-1)]"""
        if self.kind == OffspringKind.geometric:
            r = 1.0 - self.p
            return 2.0 * r * r / (self.p * self.p)
        if self.kind == OffspringKind.poisson:
            return self.lam * self.lam
        if self.kind == OffspringKind.binary:
            return 2.0 * self.p
        return math.fsum(k * (k - 1) * q for k, q in enumerate(self.probs))

    def eta(self) -> float:
        """Second factorial moment over squared mean"""
        m = self.mean()
        return self.factorial_moment2() / (m * m)

    def zeta(self, a: int) -> float:
        """
        Standardized truncated second moment sum_{y >= a} y^2 q(y) / m^2.

        Tails are closed-form per kind; a tail below 1e-14 of E[Y^2] is
        reported as 0.
        """
        if a < 1:
            raise DomainError(f"zeta needs a >= 1, got {a}")
        m = self.mean()
        second = self.factorial_moment2() + m
        if self.kind == OffspringKind.geometric:
            r = 1.0 - self.p
            ey = r / self.p
            ey2 = r * (1.0 + r) / (self.p * self.p)
            # memoryless: Y | Y >= a is a + Y'
            tail = r ** a * (a * a + 2.0 * a * ey + ey2)
        elif self.kind == OffspringKind.poisson:
            lam = self.lam
            # y^2 = y(y-1) + y, and sum_{y>=a} y(y-1) q(y) = lam^2 P{Y >= a-2}
            tail = lam * lam * _poisson_tail(a - 2, lam) + lam * _poisson_tail(a - 1, lam)
        elif self.kind == OffspringKind.binary:
            tail = 4.0 * self.p if a <= 2 else 0.0
        else:
            tail = math.fsum(k * k * q for k, q in enumerate(self.probs) if k >= a)
        if tail <= ZETA_TAIL_CUT * second:
            return 0.0
        return tail / (m * m)

    # ------------------------------------------------------------------
    # generating function calculus
    # ------------------------------------------------------------------

    def pgf(self, s: ArrayLike) -> ArrayLike:
        """f(s) = sum_k s^k q(k) for s in [0, 1]"""
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
            raise DomainError(f"pgf argument must lie in [0,1], got {s!r}")
        if self.kind == OffspringKind.geometric:
            out = self.p / (1.0 - (1.0 - self.p) * arr)
        elif self.kind == OffspringKind.poisson:
            out = np.exp(self.lam * (arr - 1.0))
        elif self.kind == OffspringKind.binary:
            out = 1.0 - self.p + self.p * arr * arr
        else:
            out = np.polyval(np.asarray(self.probs[::-1]), arr)
        return float(out) if np.ndim(out) == 0 else out

    def survival_map(self, h: ArrayLike) -> ArrayLike:
        """g(h) = 1 - f(1 - h), evaluated without cancellation"""
        arr = np.asarray(h, dtype=float)
        if self.kind == OffspringKind.geometric:
            r = 1.0 - self.p
            out = r * arr / (self.p + r * arr)
        elif self.kind == OffspringKind.poisson:
            out = -np.expm1(-self.lam * arr)
        elif self.kind == OffspringKind.binary:
            out = self.p * arr * (2.0 - arr)
        else:
            out = self._explicit_survival(arr)
        return float(out) if np.ndim(out) == 0 else out

    def log_survival_ratio(self, h: ArrayLike) -> ArrayLike:
        """log(g(h)/h); at h = 0 this is log m"""
        arr = np.atleast_1d(np.asarray(h, dtype=float))
        if self.kind == OffspringKind.geometric:
            r = 1.0 - self.p
            out = np.log(r) - np.log(self.p + r * arr)
        elif self.kind == OffspringKind.binary:
            out = np.log(self.p) + np.log(2.0 - arr)
        else:
            zero = arr <= 0.0
            safe = np.where(zero, 1.0, arr)
            if self.kind == OffspringKind.poisson:
                ratio = -np.expm1(-self.lam * safe) / safe
            else:
                ratio = self._explicit_survival(safe) / safe
            out = np.where(zero, self.log_mean(), np.log(ratio))
        return float(out[0]) if np.ndim(h) == 0 else out

    def _explicit_survival(self, h: np.ndarray) -> np.ndarray:
        probs = np.asarray(self.probs)
        ks = np.arange(1, len(probs))
        if ks.size == 0:
            return np.zeros_like(h)
        with np.errstate(divide="ignore"):
            log_keep = np.log1p(-np.clip(h, 0.0, 1.0))
        # 1 - (1-h)^k for k >= 1
        lost = -np.expm1(np.multiply.outer(log_keep, ks))
        return lost @ probs[1:]

    # ------------------------------------------------------------------
    # pmf and sampling
    # ------------------------------------------------------------------

    def support_max(self) -> Optional[int]:
        if self.kind == OffspringKind.binary:
            return 2
        if self.kind == OffspringKind.explicit:
            return len(self.probs) - 1
        return None

    def pmf(self, k: ArrayLike) -> np.ndarray:
        ks = np.asarray(k)
        if self.kind == OffspringKind.geometric:
            return np.where(ks >= 0, self.p * (1.0 - self.p) ** np.maximum(ks, 0), 0.0)
        if self.kind == OffspringKind.poisson:
            return stats.poisson.pmf(ks, self.lam)
        if self.kind == OffspringKind.binary:
            return np.where(ks == 0, 1.0 - self.p, np.where(ks == 2, self.p, 0.0))
        probs = np.asarray(self.probs)
        inside = (ks >= 0) & (ks < len(probs))
        return np.where(inside, probs[np.clip(ks, 0, len(probs) - 1)], 0.0)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """size i.i.d. offspring counts"""
        if self.kind == OffspringKind.geometric:
            return rng.geometric(self.p, size=size) - 1
        if self.kind == OffspringKind.poisson:
            return rng.poisson(self.lam, size=size)
        if self.kind == OffspringKind.binary:
            return 2 * rng.binomial(1, self.p, size=size)
        return rng.choice(len(self.probs), size=size, p=np.asarray(self.probs))

    def sample_sum(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """For each entry z_j, the total offspring of z_j independent parents"""
        z = np.asarray(z, dtype=np.int64)
        out = np.zeros_like(z)
        alive = z > 0
        if not np.any(alive):
            return out
        zl = z[alive]
        if self.kind == OffspringKind.geometric:
            out[alive] = rng.negative_binomial(zl, self.p)
        elif self.kind == OffspringKind.poisson:
            out[alive] = rng.poisson(self.lam * zl)
        elif self.kind == OffspringKind.binary:
            out[alive] = 2 * rng.binomial(zl, self.p)
        else:
            counts = rng.multinomial(zl, np.asarray(self.probs))
            out[alive] = counts @ np.arange(len(self.probs))
        return out

    def label(self) -> str:
        if self.kind == OffspringKind.poisson:
            return f"Poisson(lam={self.lam:.6g})"
        if self.kind == OffspringKind.explicit:
            return f"Explicit(K={len(self.probs) - 1})"
        return f"{self.kind.value.capitalize()}(p={self.p:.6g})"


def _poisson_tail(j: int, lam: float) -> float:
    """P{Y >= j} for Y ~ Poisson(lam)"""
    if j <= 0:
        return 1.0
    return float(stats.poisson.sf(j - 1, lam))
