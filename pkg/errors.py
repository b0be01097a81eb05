"""
Error and warning types shared by every layer.

Errors abort an operation; warnings flag a result that is still returned
but carries a visible caveat (truncation, lattice downgrade, low ESS).
"""


class BPREError(Exception):
    """Base class for simulator errors"""


class DomainError(BPREError, ValueError):
    """Argument outside the mathematical domain (e.g. pgf at s > 1)"""


class EnvironmentConfigError(BPREError, ValueError):
    """Environment JSON could not be turned into a valid EnvironmentLaw"""


class NotSubcritical(BPREError):
    """phi(0) = E[X] >= 0, so no weakly subcritical tilt exists"""


class NoRoot(BPREError):
    """phi has no sign change on (0, 1)"""


class SizeLimit(BPREError):
    """Exact enumeration would exceed its configured budget"""

    def __init__(self, size: int, budget: int, what: str = "enumeration"):
        self.size = size
        self.budget = budget
        super().__init__(f"{what} size {size} exceeds budget {budget}")


class CapExceeded(BPREError):
    """Population exceeded the per-generation cap"""


class ConditioningTimeout(BPREError):
    """Rejection sampler acceptance rate fell below the configured floor"""


class TailMass(BPREError):
    """Truncated DP state space lost more mass than allowed"""


class DualityError(BPREError, ValueError):
    """Dual path requested for a walk that does not start at 0"""


class UsageError(BPREError):
    """Invalid combination of CLI options"""


class TruncationWarning(UserWarning):
    """Renewal series truncation term is large against the pooled stderr"""


class LatticeWarning(UserWarning):
    """Density-constant check requested on a lattice environment"""


class ESSWarning(UserWarning):
    """Weighted sample has a small effective sample size"""


class CensoringWarning(UserWarning):
    """Some population paths hit the cap and were censored"""
