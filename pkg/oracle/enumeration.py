"""
Exact Oracle - ground truth by full enumeration

Atom sequences of length n are enumerated lexicographically in streamed
chunks (never materialized as a whole); sums are accumulated with
math.fsum, so results are seed independent and reproducible to a few ulps
for any split of the index range across workers.
"""
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, Iterator, List, Optional
import logging
import math
import time

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from branching.quenched import log_survival_batch, log_survival_linear_fractional, walk_from_atoms
from config import settings
from environment.env_law import EnvironmentLaw
from environment.offspring import OffspringKind, OffspringLaw
from errors import SizeLimit, TailMass
from models import ExactResult, QuantityTag, RenewalSide
from randwalk.walk import ExpMinNonneg, max_neg, min_nonneg

logger = logging.getLogger(__name__)

TAIL_MASS_LIMIT = 1e-12
DEFAULT_ZMAX_CAP = 2048
MAX_DFS_PRODUCTS = 1 << 16
# (sequences x states) cells per linear-fractional block
LINEAR_FRACTIONAL_CELLS = 1 << 22
# default cutoff of the closed-form law; its cost is linear in zmax
GEOMETRIC_ZMAX = 1 << 14


# =============================================================================
# SEQUENCE ENUMERATION
# =============================================================================

def iter_sequence_blocks(
    n_atoms: int,
    n: int,
    chunk: Optional[int] = None,
    start: int = 0,
    stop: Optional[int] = None,
) -> Iterator[np.ndarray]:
    """
    Yield (B, n) blocks of atom sequences with lexicographic indices in
    [start, stop). Sequence i has digit j equal to (i // A^(n-1-j)) % A.
    """
    chunk = settings.ORACLE_CHUNK if chunk is None else chunk
    total = n_atoms ** n
    stop = total if stop is None else min(stop, total)
    if n == 0:
        if start == 0 and stop >= 1:
            yield np.zeros((1, 0), dtype=np.int64)
        return
    powers = n_atoms ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for lo in range(start, stop, chunk):
        idx = np.arange(lo, min(lo + chunk, stop), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % n_atoms


def _check_budget(n_atoms: int, n: int, budget: int, what: str) -> int:
    size = n_atoms ** n
    if size > budget:
        raise SizeLimit(size, budget, what)
    return size


def _partition(total: int, parts: int) -> List[tuple]:
    edges = np.linspace(0, total, parts + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# =============================================================================
# SURVIVAL
# =============================================================================

def _survival_terms(env: EnvironmentLaw, n: int, lo: int, hi: int) -> List[float]:
    """Per-sequence terms w(seq) * q_n(seq) for indices in [lo, hi)"""
    log_w = np.log(env.weights())
    terms: List[float] = []
    for seqs in iter_sequence_blocks(env.n_atoms, n, start=lo, stop=hi):
        log_terms = log_w[seqs].sum(axis=1) + log_survival_batch(env, seqs)
        terms.append(math.fsum(np.exp(log_terms)))
    return terms


def exact_survival(
    env: EnvironmentLaw,
    n: int,
    budget: Optional[int] = None,
    workers: int = 1,
) -> ExactResult:
    """
    P{Z_n > 0} = sum over atom sequences of weight * (1 - f_{0,n}(0)).

    Raises:
        SizeLimit: atom-count^n above budget
    """
    budget = settings.ORACLE_BUDGET if budget is None else budget
    size = _check_budget(env.n_atoms, n, budget, "survival enumeration")
    start = time.time()
    if n == 0:
        value = 1.0
    elif workers > 1 and size > settings.ORACLE_CHUNK:
        ranges = _partition(size, workers)
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(_survival_terms, [env] * len(ranges), [n] * len(ranges),
                                      [a for a, _ in ranges], [b for _, b in ranges]))
        value = math.fsum(t for part in parts for t in part)
    else:
        value = math.fsum(_survival_terms(env, n, 0, size))
    logger.info(f"Exact survival n={n}: {value:.17g} over {size} sequences in {time.time() - start:.2f}s")
    return ExactResult(quantity=QuantityTag.survival, value=value, enumeration_size=size, details={"n": n})


# =============================================================================
# WALK FUNCTIONALS
# =============================================================================

def exact_walk_functional(
    env: EnvironmentLaw,
    n: int,
    functional: Callable[[np.ndarray], np.ndarray],
    start: float = 0.0,
    quantity: QuantityTag = QuantityTag.walk_functional,
    budget: Optional[int] = None,
) -> ExactResult:
    """
    E_x[h(S_0..S_n)] as an exact finite sum over atom sequences.

    `functional` maps a (B, n+1) block of partial sums to B values; pass
    the tilted environment to get tilted-measure expectations.
    """
    budget = settings.WALK_ORACLE_BUDGET if budget is None else budget
    size = _check_budget(env.n_atoms, n, budget, "walk enumeration")
    x = env.log_means()
    log_w = np.log(env.weights())
    terms: List[float] = []
    for seqs in iter_sequence_blocks(env.n_atoms, n):
        steps = x[seqs]
        sums = np.concatenate([np.full((seqs.shape[0], 1), float(start)), start + np.cumsum(steps, axis=1)], axis=1)
        h = np.asarray(functional(sums), dtype=float)
        terms.append(math.fsum(np.exp(log_w[seqs].sum(axis=1)) * h))
    value = math.fsum(terms)
    return ExactResult(quantity=quantity, value=value, enumeration_size=size, details={"n": n, "start": start})


def exact_prob_min_nonneg(env: EnvironmentLaw, n: int, budget: Optional[int] = None) -> ExactResult:
    """P{L_n >= 0} under the law of env"""
    return exact_walk_functional(env, n, ExpMinNonneg(0.0), quantity=QuantityTag.prob_min_nonneg, budget=budget)


def exact_ratio(env: EnvironmentLaw, n: int) -> ExactResult:
    """P{Z_n > 0} / P{L_n >= 0}, the small-n anchor of the survival ratio"""
    survival = exact_survival(env, n)
    walk = exact_prob_min_nonneg(env, n, budget=settings.ORACLE_BUDGET)
    return ExactResult(
        quantity=QuantityTag.survival_ratio,
        value=survival.value / walk.value,
        enumeration_size=survival.enumeration_size,
        details={"n": n, "survival": survival.value, "prob_min_nonneg": walk.value},
    )


def exact_renewal(env: EnvironmentLaw, side: RenewalSide, x: float, K: int) -> ExactResult:
    """
    Truncated renewal series by enumeration of every length k <= K:

        u_K(x) = 1 + sum_k P{-S_k <= x, M_k < 0}      (x >= 0)
        v_K(x) = 1 + sum_k P{-S_k > x, L_k >= 0}      (x <= 0)
    """
    if side == RenewalSide.u:
        event = lambda s: max_neg(s) & (-s[:, -1] <= x)  # noqa: E731
        quantity = QuantityTag.renewal_u
    else:
        event = lambda s: min_nonneg(s) & (-s[:, -1] > x)  # noqa: E731
        quantity = QuantityTag.renewal_v
    total = 0
    terms = [1.0]
    for k in range(1, K + 1):
        result = exact_walk_functional(env, k, event)
        terms.append(result.value)
        total += result.enumeration_size
    return ExactResult(
        quantity=quantity,
        value=math.fsum(terms),
        enumeration_size=total,
        details={"x": x, "K": K, "K_term": terms[-1]},
    )


# =============================================================================
# CONDITIONAL LAW OF Z_n
# =============================================================================

def _convolution_rows(law: OffspringLaw, zmax: int) -> np.ndarray:
    """T[z, z'] = P{sum of z offspring = z'} truncated to z' <= zmax"""
    grid = np.arange(zmax + 1)
    rows = np.zeros((zmax + 1, zmax + 1))
    rows[0, 0] = 1.0
    if law.kind == OffspringKind.poisson:
        rows[1:] = stats.poisson.pmf(grid[None, :], law.lam * grid[1:, None])
    elif law.kind == OffspringKind.geometric:
        rows[1:] = stats.nbinom.pmf(grid[None, :], grid[1:, None], law.p)
    else:
        q = law.pmf(np.arange(law.support_max() + 1))
        row = rows[0]
        for z in range(1, zmax + 1):
            row = np.convolve(row, q)[: zmax + 1]
            rows[z] = row
    return rows


def annealed_kernel(env: EnvironmentLaw, zmax: int) -> np.ndarray:
    """Averaged one-generation kernel sum_i w_i T_i on states 0..zmax"""
    kernel = np.zeros((zmax + 1, zmax + 1))
    for atom in env.atoms:
        kernel += atom.weight * _convolution_rows(atom.law, zmax)
    return kernel


def _default_zmax(env: EnvironmentLaw, n: int) -> int:
    support = env.max_support()
    if support is None:
        return 1024
    return int(min(max(support, 1) ** n, DEFAULT_ZMAX_CAP))


def _linear_fractional_law(env: EnvironmentLaw, n: int, zmax: int):
    """
    Unnormalized law of Z_n on {Z_n > 0} for all-geometric environments.

    Given the sequence, Z_n > 0 has probability 1/(sum_{k<n} e^{-S_k} + e^{-S_n})
    and Z_n given Z_n > 0 is geometric on {1, 2, ...} with mean
    1 + e^{S_n} sum_{k<n} e^{-S_k}. Returns (masses on 0..zmax, alive
    terms, tail terms above zmax, mean terms).
    """
    log_w = np.log(env.weights())
    steps = np.arange(zmax, dtype=float)
    masses = np.zeros(zmax + 1)
    alive_terms: List[float] = []
    tail_terms: List[float] = []
    mean_terms: List[float] = []
    rows = max(1, LINEAR_FRACTIONAL_CELLS // max(zmax, 1))
    for seqs in iter_sequence_blocks(env.n_atoms, n, chunk=rows):
        walks = walk_from_atoms(env, seqs)
        log_alive = log_w[seqs].sum(axis=1) + log_survival_linear_fractional(env, seqs)
        log_excess = walks[:, -1] + logsumexp(-walks[:, :-1], axis=1)
        log_mean = np.logaddexp(0.0, log_excess)
        log_ratio = -np.logaddexp(0.0, -log_excess)
        log_head = log_alive - log_mean
        masses[1:] += np.exp(log_head[:, None] + steps[None, :] * log_ratio[:, None]).sum(axis=0)
        alive_terms.append(math.fsum(np.exp(log_alive)))
        tail_terms.append(math.fsum(np.exp(log_alive + zmax * log_ratio)))
        mean_terms.append(math.fsum(np.exp(log_alive + log_mean)))
    return masses, alive_terms, tail_terms, mean_terms


def exact_conditional_pmf(
    env: EnvironmentLaw,
    n: int,
    zmax: Optional[int] = None,
    method: str = "kernel",
    tail_limit: float = TAIL_MASS_LIMIT,
) -> ExactResult:
    """
    Law of Z_n given Z_n > 0 on states 1..zmax.

    method="kernel" iterates the averaged kernel (the annealed chain);
    method="sequences" mixes per-sequence laws over the sequence tree;
    method="linear-fractional" sums the closed-form geometric laws of
    all-geometric environments, with no truncation error below zmax.
    The value is the conditional mean. details hold the pmf, the
    unconditional mass above zmax (tail_mass) and its conditional share
    (tail_conditional); the pmf sums to 1 - tail_conditional.

    Raises:
        SizeLimit: kernel or sequence tree too large
        TailMass: more than tail_limit of the mass lies above zmax
        ValueError: unknown method, or linear-fractional on a non-geometric
            environment or at n = 0
    """
    if zmax is None:
        zmax = GEOMETRIC_ZMAX if method == "linear-fractional" else _default_zmax(env, n)
    if method == "linear-fractional":
        if not env.is_all_geometric():
            raise ValueError("linear-fractional law needs every atom to be geometric")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        size = _check_budget(env.n_atoms, n, settings.ORACLE_BUDGET, "conditional-pmf sequences")
        masses, alive_terms, tail_terms, mean_terms = _linear_fractional_law(env, n, zmax)
        survival = math.fsum(alive_terms)
        tail = math.fsum(tail_terms)
        mean = math.fsum(mean_terms) / survival
        vec = masses
    else:
        cells = (zmax + 1) ** 2 * env.n_atoms
        if cells > settings.ORACLE_BUDGET:
            raise SizeLimit(cells, settings.ORACLE_BUDGET, "conditional-pmf kernel")
        start_vec = np.zeros(zmax + 1)
        start_vec[min(1, zmax)] = 1.0
        if method == "kernel":
            kernel = annealed_kernel(env, zmax)
            vec = start_vec
            for _ in range(n):
                vec = vec @ kernel
            size = cells
        elif method == "sequences":
            products = sum(env.n_atoms ** k for k in range(1, n + 1))
            if products > MAX_DFS_PRODUCTS:
                raise SizeLimit(products, MAX_DFS_PRODUCTS, "conditional-pmf sequence tree")
            kernels = [_convolution_rows(a.law, zmax) for a in env.atoms]
            vec = _mix_sequences(start_vec, kernels, env.weights(), n)
            size = env.n_atoms ** n
        else:
            raise ValueError(f"unknown method {method!r}")
        # mass pushed above zmax is alive at n up to a negligible extinction
        tail = max(0.0, 1.0 - math.fsum(vec))
        survival = math.fsum(vec[1:]) + tail
        mean = None

    if tail > tail_limit:
        raise TailMass(f"tail mass {tail:.3e} above zmax={zmax} exceeds {tail_limit}")
    pmf = {int(z): float(p / survival) for z, p in enumerate(vec) if z > 0 and p > 0.0}
    if mean is None:
        mean = math.fsum(z * p for z, p in pmf.items())
    return ExactResult(
        quantity=QuantityTag.conditional_pmf,
        value=mean,
        enumeration_size=size,
        details={
            "n": n,
            "zmax": zmax,
            "tail_mass": tail,
            "tail_conditional": tail / survival,
            "survival": survival,
            "pmf": pmf,
            "method": method,
        },
    )


def _mix_sequences(vec: np.ndarray, kernels: List[np.ndarray], weights: np.ndarray, depth: int) -> np.ndarray:
    """sum over atom sequences of weight * (vec T_{a_1} ... T_{a_depth})"""
    if depth == 0:
        return vec
    mixed = np.zeros_like(vec)
    for w, kernel in zip(weights, kernels):
        mixed += w * _mix_sequences(vec @ kernel, kernels, weights, depth - 1)
    return mixed


def pmf_from_result(result: ExactResult) -> Dict[int, float]:
    """Conditional pmf stored in an exact_conditional_pmf result"""
    return {int(k): float(v) for k, v in result.details["pmf"].items()}
