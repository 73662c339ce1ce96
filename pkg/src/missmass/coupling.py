"""Coupling of two dithered geometric distributions that differ in one block.

theta and theta' share theta_1..theta_{k-1}; theta_k = beta while
theta'_k = 1 - beta. The joint law q keeps pairs equal below block k, mixes
the two cells of block k through the table

              x'=m+2k-1   x'=m+2k
    x=m+2k-1     beta        0
    x=m+2k     1-2beta      beta

(times 2**-(m+k)), and draws the two tails independently. On the pivotal
event (the X sample covers exactly 1..m+2k-1) both samples coincide while
their missing masses differ by the factor (2-beta)/(1+beta).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .distributions import LOW_FLAG, HIGH_FLAG, DitheredGeometricDist, SampleSummary, normalize_flags
from .estimators import missing_mass_true

PIVOTAL_CHUNK = 1 << 14
CI_LEVEL_Z = 2.5758293035489004  # two-sided 99%


@dataclass(frozen=True)
class CouplingParams:
    beta: float
    m: int
    k: int
    shared_prefix: str = ""
    trailing_theta: str = ""
    trailing_theta_prime: str = ""
    trailing_default: str = LOW_FLAG
    trailing_default_prime: str = LOW_FLAG

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 1/2)")
        if self.m < 1 or self.k < 1:
            raise ValueError("m and k must be positive")
        shared = normalize_flags(self.shared_prefix)
        if len(shared) < self.k - 1:
            shared += LOW_FLAG * (self.k - 1 - len(shared))
        if len(shared) != self.k - 1:
            raise ValueError(f"shared_prefix must hold k-1={self.k - 1} flags, got {len(shared)}")
        object.__setattr__(self, "shared_prefix", shared)
        for name in ("trailing_theta", "trailing_theta_prime", "trailing_default", "trailing_default_prime"):
            object.__setattr__(self, name, normalize_flags(getattr(self, name)))

    @property
    def first_cell(self) -> int:
        """m + 2k - 1, the first symbol of the dithered block k."""
        return self.m + 2 * self.k - 1

    @property
    def block_mass(self) -> float:
        return math.ldexp(1.0, -(self.m + self.k))

    @cached_property
    def theta(self) -> DitheredGeometricDist:
        return DitheredGeometricDist(
            self.beta, self.m, self.shared_prefix + LOW_FLAG + self.trailing_theta, self.trailing_default
        )

    @cached_property
    def theta_prime(self) -> DitheredGeometricDist:
        return DitheredGeometricDist(
            self.beta, self.m, self.shared_prefix + HIGH_FLAG + self.trailing_theta_prime, self.trailing_default_prime
        )


@dataclass
class CoupledSample:
    pairs: np.ndarray  # shape (n, 2)
    params: CouplingParams

    @property
    def n(self) -> int:
        return int(self.pairs.shape[0])

    @property
    def x(self) -> SampleSummary:
        return SampleSummary.from_draws(self.pairs[:, 0])

    @property
    def x_prime(self) -> SampleSummary:
        return SampleSummary.from_draws(self.pairs[:, 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "x", "x_prime"])
        for i, (a, b) in enumerate(self.pairs.tolist(), start=1):
            w.writerow([i, a, b])
        return buf.getvalue()


def coupled_pmf(params: CouplingParams, x: int, x_prime: int) -> float:
    """Joint probability q(x, x').

    The tail branch is p_theta(x) p_theta'(x') * 2**(m+k): conditional
    independence given that both lie past the block, which is what makes
    both marginals come out right.
    """
    if x < 1 or x_prime < 1:
        raise ValueError("symbols are positive integers")
    lo, hi = params.first_cell, params.first_cell + 1
    w = params.block_mass
    if x == x_prime and x < lo:
        return params.theta.pmf(x)
    if x == x_prime and x in (lo, hi):
        return params.beta * w
    if x == hi and x_prime == lo:
        return (1.0 - 2.0 * params.beta) * w
    if x > hi and x_prime > hi:
        return params.theta.pmf(x) * params.theta_prime.pmf(x_prime) / w
    return 0.0


def _split_level(dist: DitheredGeometricDist, level: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map geometric(1/2) levels to symbols of a dithered distribution."""
    out = level.copy()
    beyond = level > dist.m
    j = level[beyond] - dist.m
    first = u[beyond] < dist.theta_values(j)
    out[beyond] = np.where(first, dist.m + 2 * j - 1, dist.m + 2 * j)
    return out


def _draw_pairs(params: CouplingParams, shape, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Exact sampler: pick the region by its dyadic mass, then sample within it."""
    m, k, beta = params.m, params.k, params.beta
    theta, theta_p = params.theta, params.theta_prime
    lo = params.first_cell
    level = rng.geometric(0.5, size=shape).astype(np.int64)
    u = rng.random(shape)
    # below the block both coordinates agree and follow the shared prefix
    x = _split_level(theta, level, u)
    xp = x.copy()

    in_block = level == m + k
    if np.any(in_block):
        v = u[in_block]
        cell_x = np.where(v < beta, lo, lo + 1)
        cell_xp = np.where(v < beta, lo, np.where(v < 1.0 - beta, lo, lo + 1))
        x[in_block] = cell_x
        xp[in_block] = cell_xp

    in_tail = level > m + k
    if np.any(in_tail):
        t = int(in_tail.sum())
        level_p = m + k + rng.geometric(0.5, size=t).astype(np.int64)
        xp[in_tail] = _split_level(theta_p, level_p, rng.random(t))
    return x, xp


def draw_coupled(params: CouplingParams, n: int, seed) -> CoupledSample:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x, xp = _draw_pairs(params, n, rng)
    return CoupledSample(np.column_stack([x, xp]), params)


def is_pivotal(cs: CoupledSample) -> bool:
    """True iff the X sample covers exactly {1, ..., m+2k-1} and every pair agrees."""
    top = cs.params.first_cell
    xs = cs.pairs[:, 0]
    covered = set(np.unique(xs).tolist()) == set(range(1, top + 1))
    return covered and bool(np.all(cs.pairs[:, 0] == cs.pairs[:, 1]))


def _pivotal_rows(x: np.ndarray, xp: np.ndarray, top: int) -> np.ndarray:
    ok = np.all(x <= top, axis=1) & np.all(x == xp, axis=1)
    for v in range(1, top + 1):
        ok &= np.any(x == v, axis=1)
    return ok


def coupled_missing_masses(cs: CoupledSample) -> tuple[float, float]:
    return (
        missing_mass_true(cs.params.theta, cs.x),
        missing_mass_true(cs.params.theta_prime, cs.x_prime),
    )


def _chunk_sizes(reps: int, chunk: int) -> list[int]:
    full, rest = divmod(reps, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _pivotal_batches(params: CouplingParams, n: int, reps: int, seed, workers: int = 1) -> Iterator:
    """Yield (x, x', pivotal_mask) per replicate chunk; chunk c uses the c-th spawned seed."""
    sizes = _chunk_sizes(reps, PIVOTAL_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    top = params.first_cell

    def run(i):
        rng = np.random.default_rng(seeds[i])
        x, xp = _draw_pairs(params, (sizes[i], n), rng)
        return x, xp, _pivotal_rows(x, xp, top)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            yield from pool.map(run, range(len(sizes)))
    else:
        for i in range(len(sizes)):
            yield run(i)


def binomial_halfwidth(successes: int, trials: int, z: float = CI_LEVEL_Z) -> float:
    """Half-width of the Wilson score interval, measured from the point estimate.

    The larger of the two sides is returned so that p_hat -/+ halfwidth
    contains the Wilson interval. Fewer than two trials give 1.
    """
    if trials < 2:
        return 1.0
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    rad = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(p - (center - rad), (center + rad) - p)


def estimate_pivotal_prob(params: CouplingParams, n: int, reps: int, seed, workers: int = 1) -> tuple[float, float]:
    """Monte Carlo P(A_k) at sample size n with a 99% Wilson half-width."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    hits = sum(int(mask.sum()) for _, _, mask in _pivotal_batches(params, n, reps, seed, workers))
    return hits / reps, binomial_halfwidth(hits, reps)


def harvest_pivotal(params: CouplingParams, n: int, reps: int, seed, limit: int | None = None) -> tuple[list[CoupledSample], int]:
    """Run ``reps`` coupled replicates and return the pivotal ones (and the hit count)."""
    found: list[CoupledSample] = []
    hits = 0
    for x, xp, mask in _pivotal_batches(params, n, reps, seed):
        hits += int(mask.sum())
        for row in np.flatnonzero(mask):
            if limit is None or len(found) < limit:
                found.append(CoupledSample(np.column_stack([x[row], xp[row]]), params))
    return found, hits


def sample_size(C: float, k: int) -> int:
    """n_k = C * 2**k, which must be an integer."""
    n = C * 2 ** k
    if n != int(n) or n < 1:
        raise ValueError(f"C * 2**k = {n} is not a positive integer")
    return int(n)
