"""
Shared result models for the weakly subcritical BPRE simulator

Every Monte Carlo output is an Estimate; every enumeration output is an
ExactResult. Both serialize through `to_dict()` for the reporting layer.
"""
from typing import Any, Dict
import enum
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator


# =============================================================================
# ENUMS
# =============================================================================

class EstimatorMethod(str, enum.Enum):
    """Estimator method tag"""
    naive = "naive"
    quenched_cond = "quenched-cond"
    tilted_is = "tilted-is"
    mc = "mc"


class ConditioningMode(str, enum.Enum):
    """Conditioning event for walk samplers"""
    stay_nonneg = "stay-nonneg"          # L_n >= 0
    stay_neg = "stay-neg"                # M_n < 0
    first_min_at_n = "first-min-at-n"    # tau_n = n


class RenewalSide(str, enum.Enum):
    """Which renewal function a table holds"""
    u = "u"
    v = "v"


class QuantityTag(str, enum.Enum):
    """Oracle quantity tags"""
    survival = "survival"
    conditional_pmf = "conditional-pmf"
    walk_functional = "walk-functional"
    prob_min_nonneg = "prob-min-nonneg"
    exp_max_neg = "exp-max-neg"
    exp_first_min = "exp-first-min"
    exp_min_nonneg = "exp-min-nonneg"
    survival_ratio = "survival-ratio"
    renewal_u = "renewal-u"
    renewal_v = "renewal-v"


# =============================================================================
# RESULT MODELS
# =============================================================================

class Estimate(BaseModel):
    """Monte Carlo estimate with its standard error"""
    model_config = ConfigDict(frozen=True)

    value: float = Field(ge=0.0)
    stderr: float = Field(ge=0.0)
    reps: int = Field(ge=1)
    method: EstimatorMethod
    elapsed: float = Field(default=0.0, ge=0.0, description="seconds")
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("stderr")
    @classmethod
    def _finite_stderr(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError("stderr must not be NaN")
        return v

    def z_score(self, reference: float) -> float:
        """(value - reference) / stderr, 0 when both agree exactly"""
        diff = self.value - reference
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def within(self, reference: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.value - reference) <= sigmas * self.stderr + slack

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "reps": self.reps,
            "method": self.method.value,
            "elapsed_ms": self.elapsed * 1000.0,
            **({"details": self.details} if self.details else {}),
        }


class ExactResult(BaseModel):
    """Exact enumeration result (seed independent)"""
    model_config = ConfigDict(frozen=True)

    quantity: QuantityTag
    value: float
    enumeration_size: int = Field(ge=0)
    details: Dict[str, Any] = Field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "quantity": self.quantity.value,
            "value": self.value,
            "enumeration_size": self.enumeration_size,
            **({"details": self.details} if self.details else {}),
        }
