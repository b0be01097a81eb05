"""
Population simulation in a fixed environment

Z_0 = 1 and, given the environment, Z_k is the sum of Z_{k-1} independent
draws from the k-th atom's offspring law. Generations above the cap are
censored, never silently clipped.
"""
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple
import logging

import numpy as np

from config import settings
from environment.env_law import EnvironmentLaw
from errors import CapExceeded

logger = logging.getLogger(__name__)


@dataclass
class PopulationPath:
    """Z_0..Z_n on one environment; `censored_at` is the first generation over the cap"""
    atoms: np.ndarray
    sizes: np.ndarray
    cap: int
    censored_at: Optional[int] = None

    @property
    def n(self) -> int:
        return int(self.atoms.size)

    @property
    def censored(self) -> bool:
        return self.censored_at is not None

    @property
    def alive(self) -> bool:
        """Z_n > 0 (censored paths are counted alive)"""
        return self.censored or bool(self.sizes[-1] > 0)

    def extinction_time(self) -> Optional[int]:
        zeros = np.flatnonzero(self.sizes == 0)
        return int(zeros[0]) if zeros.size else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "sizes": self.sizes.tolist(),
            "cap": self.cap,
            "censored_at": self.censored_at,
        }


def simulate_population(
    env: EnvironmentLaw,
    atoms: Sequence[int],
    rng: np.random.Generator,
    cap: Optional[int] = None,
    censor: bool = False,
) -> PopulationPath:
    """
    One population path on the given atom sequence.

    Raises:
        CapExceeded: some Z_k > cap and censor is False
    """
    cap = int(settings.POPULATION_CAP if cap is None else cap)
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    atoms = np.asarray(atoms, dtype=np.int64)
    sizes, censored = simulate_populations(env, atoms[None, :], rng, cap)
    path = PopulationPath(atoms=atoms, sizes=sizes[0], cap=cap)
    if censored[0] >= 0:
        if not censor:
            raise CapExceeded(f"Z_{censored[0]} exceeded cap {cap}")
        path.censored_at = int(censored[0])
        path.sizes = path.sizes[: path.censored_at + 1]
    return path


def simulate_populations(
    env: EnvironmentLaw,
    atoms: np.ndarray,
    rng: np.random.Generator,
    cap: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Population paths for every row of a (B, n) atom block.

    Returns:
        sizes (B, n+1) int64 and, per row, the first generation above the
        cap (-1 if none). A censored row is frozen at the cap from then on.
    """
    cap = int(settings.POPULATION_CAP if cap is None else cap)
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.int64))
    reps, n = atoms.shape
    sizes = np.zeros((reps, n + 1), dtype=np.int64)
    sizes[:, 0] = 1
    censored = np.full(reps, -1, dtype=np.int64)
    current = np.ones(reps, dtype=np.int64)
    laws = env.laws
    for k in range(n):
        column = atoms[:, k]
        nxt = np.zeros(reps, dtype=np.int64)
        active = (current > 0) & (censored < 0)
        for a, law in enumerate(laws):
            mask = active & (column == a)
            if np.any(mask):
                nxt[mask] = law.sample_sum(current[mask], rng)
        over = (nxt > cap) & (censored < 0)
        censored[over] = k + 1
        frozen = censored >= 0
        nxt[frozen] = cap
        sizes[:, k + 1] = nxt
        current = nxt
    if np.any(censored >= 0):
        logger.warning(f"{int((censored >= 0).sum())} of {reps} population paths exceeded cap {cap}")
    return sizes, censored
