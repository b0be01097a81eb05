"""Environment layer - offspring laws and finite-atom environment laws"""

from .offspring import OffspringKind, OffspringLaw
from .env_law import (
    AssumptionReport,
    EnvironmentAtom,
    EnvironmentLaw,
    MomentReport,
    assumption_report,
    load_environment,
    parse_environment,
)

__all__ = [
    "OffspringKind",
    "OffspringLaw",
    "AssumptionReport",
    "EnvironmentAtom",
    "EnvironmentLaw",
    "MomentReport",
    "assumption_report",
    "load_environment",
    "parse_environment",
]
