"""
Convergence tables and limit-constant records for the harness
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import math

from montecarlo.stats import confidence_interval, ratio_stderr

CSV_HEADER = ("n", "statistic", "stderr")


@dataclass
class TableRow:
    n: int
    statistic: float
    stderr: float
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "statistic": self.statistic, "stderr": self.stderr, **self.extra}


@dataclass
class ConvergenceTable:
    """
    Statistic across increasing n with a stabilization verdict: the
    relative change between the last two rows must not exceed threshold.
    """
    name: str
    threshold: float
    rows: List[TableRow] = field(default_factory=list)
    reference: Optional[float] = None
    reference_bar: float = 0.0
    notes: List[str] = field(default_factory=list)

    def add(self, n: int, statistic: float, stderr: float, **extra: float) -> None:
        if self.rows and n <= self.rows[-1].n:
            raise ValueError(f"n must be strictly increasing: {n} after {self.rows[-1].n}")
        if stderr < 0.0 or math.isnan(stderr):
            raise ValueError(f"stderr must be >= 0, got {stderr}")
        self.rows.append(TableRow(n=n, statistic=statistic, stderr=stderr, extra=dict(extra)))

    @property
    def ns(self) -> List[int]:
        return [r.n for r in self.rows]

    @property
    def last(self) -> TableRow:
        return self.rows[-1]

    def stabilization(self) -> float:
        """|s_last / s_prev - 1|; inf when it cannot be formed"""
        if len(self.rows) < 2:
            return math.inf
        prev, last = self.rows[-2].statistic, self.rows[-1].statistic
        if prev == 0.0 or not math.isfinite(prev) or not math.isfinite(last):
            return math.inf
        return abs(last / prev - 1.0)

    def stabilization_stderr(self) -> float:
        if len(self.rows) < 2:
            return math.inf
        prev, last = self.rows[-2], self.rows[-1]
        return ratio_stderr(last.statistic, last.stderr, prev.statistic, prev.stderr)

    def passed(self) -> bool:
        return self.stabilization() <= self.threshold

    def reference_gap(self) -> Optional[float]:
        """(last statistic - reference) in units of the combined bars"""
        if self.reference is None or not self.rows:
            return None
        bar = 3.0 * self.last.stderr + self.reference_bar
        diff = self.last.statistic - self.reference
        if bar == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / bar

    def to_rows(self) -> List[Dict[str, Any]]:
        return [r.to_dict() for r in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "rows": self.to_rows(),
            "stabilization": self.stabilization(),
            "stabilization_stderr": self.stabilization_stderr(),
            "threshold": self.threshold,
            "passed": self.passed(),
            "reference": self.reference,
            "reference_bar": self.reference_bar,
            "notes": self.notes,
        }


@dataclass
class LimitConstants:
    """Estimated limit constants with 95% intervals (None when not estimated)"""
    kappa: Optional[float] = None
    kappa_stderr: float = 0.0
    kappa_prime: Optional[float] = None
    kappa_prime_stderr: float = 0.0

    def kappa_interval(self):
        return None if self.kappa is None else confidence_interval(self.kappa, self.kappa_stderr)

    def kappa_prime_interval(self):
        return None if self.kappa_prime is None else confidence_interval(self.kappa_prime, self.kappa_prime_stderr)

    def positive(self) -> bool:
        values = [v for v in (self.kappa, self.kappa_prime) if v is not None]
        return bool(values) and all(v > 0.0 for v in values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "kappa_stderr": self.kappa_stderr,
            "kappa_ci95": self.kappa_interval(),
            "kappa_prime": self.kappa_prime,
            "kappa_prime_stderr": self.kappa_prime_stderr,
            "kappa_prime_ci95": self.kappa_prime_interval(),
        }
