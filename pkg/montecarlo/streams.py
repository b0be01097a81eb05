"""
Reproducible random streams and block-parallel execution

Every Monte Carlo job splits its replicas into fixed-size blocks. Block b
of job `tag` under root seed r draws from

    default_rng(SeedSequence(blake2b64(f"{r}:{tag}:{b}")))

so results depend only on (seed, tag, block partition), never on how
blocks are scheduled across workers. Block results are merged in block
order.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Callable, Dict, List, Optional, Sequence
import hashlib
import logging
import time

import numpy as np

from config import settings

logger = logging.getLogger(__name__)

DERIVATION_RULE = "default_rng(SeedSequence(blake2b-64('{root}:{tag}:{block}')))"


def child_seed(root: int, tag: str, block: int) -> int:
    """64-bit child stream id"""
    digest = hashlib.blake2b(f"{root}:{tag}:{block}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def child_rng(root: int, tag: str, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(child_seed(root, tag, block)))


def fresh_seed() -> int:
    """Random 63-bit root seed for runs started without --seed"""
    return int(np.random.SeedSequence().entropy % (2 ** 63))


def block_sizes(reps: int, block_size: int) -> List[int]:
    """Fixed partition of reps into blocks of block_size (last one shorter)"""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    full, rest = divmod(reps, block_size)
    return [block_size] * full + ([rest] if rest else [])


# =============================================================================
# STREAM LEDGER
# =============================================================================

@dataclass
class StreamRecord:
    """One job's stream derivation, echoed into the run manifest"""
    tag: str
    root_seed: int
    blocks: int
    block_size: int
    reps: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tag": self.tag,
            "root_seed": self.root_seed,
            "blocks": self.blocks,
            "block_size": self.block_size,
            "reps": self.reps,
        }


@dataclass
class StreamLedger:
    """Collects StreamRecords for the current run"""
    records: List[StreamRecord] = field(default_factory=list)

    def record(self, rec: StreamRecord) -> None:
        self.records.append(rec)

    def clear(self) -> None:
        self.records.clear()

    def to_dict(self) -> Dict[str, Any]:
        """Jobs sorted by tag; checks running on threads record in any order"""
        jobs = sorted(self.records, key=lambda r: (r.tag, r.root_seed, r.blocks, r.block_size, r.reps))
        return {"rule": DERIVATION_RULE, "jobs": [r.to_dict() for r in jobs]}


ledger = StreamLedger()


# =============================================================================
# BLOCK RUNNER
# =============================================================================

def _run_one_block(kernel: Callable, root: int, tag: str, block: int, size: int, kwargs: Dict[str, Any]) -> Any:
    rng = child_rng(root, tag, block)
    return kernel(rng, size, **kwargs)


def run_blocks(
    kernel: Callable[..., Any],
    tag: str,
    reps: int,
    seed: int,
    workers: Optional[int] = None,
    block_size: Optional[int] = None,
    **kwargs: Any,
) -> List[Any]:
    """
    Run kernel(rng, size, **kwargs) once per block and return the block
    results in block order.

    With workers > 1 blocks fan out over a ProcessPoolExecutor; the kernel
    and kwargs must then be picklable (module-level functions, pydantic
    models, numpy arrays).
    """
    workers = settings.WORKERS if workers is None else workers
    block_size = settings.BLOCK_SIZE if block_size is None else block_size
    sizes = block_sizes(reps, block_size)
    ledger.record(StreamRecord(tag=tag, root_seed=seed, blocks=len(sizes), block_size=block_size, reps=reps))

    start = time.time()
    if workers <= 1 or len(sizes) == 1:
        results = [_run_one_block(kernel, seed, tag, b, size, kwargs) for b, size in enumerate(sizes)]
    else:
        n = len(sizes)
        with ProcessPoolExecutor(max_workers=min(workers, n)) as executor:
            results = list(executor.map(
                _run_one_block,
                [kernel] * n,
                [seed] * n,
                [tag] * n,
                range(n),
                sizes,
                [kwargs] * n,
            ))
    logger.debug(f"[{tag}] {reps} reps in {len(sizes)} blocks on {workers} worker(s): {time.time() - start:.2f}s")
    return results


# =============================================================================
# MOMENT SUMS
# =============================================================================

@dataclass
class MomentSums:
    """
    Count, column totals and cross-products of a (m, k) sample.

    Merging is exact up to float addition order, which the block order fixes.
    """
    count: int
    total: np.ndarray
    cross: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "MomentSums":
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(count=x.shape[0], total=x.sum(axis=0), cross=x.T @ x)

    def merge(self, other: "MomentSums") -> "MomentSums":
        return MomentSums(
            count=self.count + other.count,
            total=self.total + other.total,
            cross=self.cross + other.cross,
        )

    @staticmethod
    def reduce(parts: Sequence["MomentSums"]) -> "MomentSums":
        return reduce(lambda a, b: a.merge(b), parts)

    def mean(self) -> np.ndarray:
        return self.total / self.count

    def covariance(self) -> np.ndarray:
        """Unbiased sample covariance"""
        if self.count < 2:
            return np.zeros_like(self.cross)
        mu = self.mean()
        cov = (self.cross - self.count * np.outer(mu, mu)) / (self.count - 1)
        # clamp tiny negative variances from cancellation
        diag = np.clip(np.diag(cov), 0.0, None)
        np.fill_diagonal(cov, diag)
        return cov

    def stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance()) / self.count)
