"""Empirical PAC-learning curves for missing-mass estimators.

A trial draws an n-sample, computes an estimate and the true missing mass,
and fails when |estimate / M_n - 1| > eps. ``failure_curve`` repeats this
over a grid of sample sizes. Replicate r at size n is seeded with
``(seed, n, r)``, so any single cell can be recomputed with ``run_trial``.

Verdicts are empirical: a finite grid can only be consistent or
inconsistent with PAC behaviour, never prove it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .coupling import binomial_halfwidth
from .distributions import DiscreteDist, GeometricDist, draw_n
from .estimators import ESTIMATOR_IDS, estimate, missing_mass_true

CURVE_Z = 1.959963984540054  # 95% two-sided
_BATCH = 32

CONSISTENT = "consistent-with-PAC"
INCONSISTENT = "inconsistent"
INCONCLUSIVE = "inconclusive"


class Trial(NamedTuple):
    failed: bool | None
    ratio: float | None


@dataclass
class PacConfig:
    dist: DiscreteDist
    estimator_id: str
    eps: float
    n_grid: Sequence[int]
    reps: int
    seed: int = 0
    delta: float = 0.1

    def __post_init__(self):
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ValueError(f"unknown estimator {self.estimator_id!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        grid = [int(n) for n in self.n_grid]
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be a nonempty strictly increasing sequence of positive integers")
        self.n_grid = grid


@dataclass
class PacRow:
    n: int
    failure_freq: float
    ci_halfwidth: float
    mean_ratio: float
    reps_undefined: int
    reps: int


@dataclass
class PacCurve:
    rows: list[PacRow]
    eps: float
    estimator_id: str = ""
    dist: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "failure_freq", "ci", "mean_ratio", "undefined"])
        for r in self.rows:
            w.writerow([r.n, repr(r.failure_freq), repr(r.ci_halfwidth), repr(r.mean_ratio), r.reps_undefined])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def run_trial(dist: DiscreteDist, estimator_id: str, n: int, eps: float, seed) -> Trial:
    """One replicate; ratio and failed are None when M_n = 0."""
    s = draw_n(dist, n, seed)
    truth = missing_mass_true(dist, s)
    if truth is None:
        return Trial(None, None)
    ratio = estimate(estimator_id, s).estimate / truth
    return Trial(abs(ratio - 1.0) > eps, ratio)


def _batch_ratios(dist: DiscreteDist, estimator_id: str, draws: np.ndarray) -> np.ndarray:
    """Vectorized estimate/truth over rows of a (reps, n) draw matrix; nan if undefined."""
    n = draws.shape[1]
    srt = np.sort(draws, axis=1)
    new = np.ones_like(srt, dtype=bool)
    new[:, 1:] = srt[:, 1:] != srt[:, :-1]
    truth = 1.0 - np.where(new, dist.pmf(srt), 0.0).sum(axis=1)
    if estimator_id == "empirical":
        est = np.zeros(srt.shape[0])
    elif estimator_id == "good_turing":
        last = np.ones_like(new)
        last[:, :-1] = new[:, 1:]
        est = (new & last).sum(axis=1) / n
    else:
        a = 1.0 - n / srt.sum(axis=1)
        p = (1.0 - a)[:, None] * np.power(a[:, None], (srt - 1).astype(np.float64))
        est = np.clip(1.0 - np.where(new, p, 0.0).sum(axis=1), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(truth > 0.0, est / truth, np.nan)


def trial_ratios(dist: DiscreteDist, estimator_id: str, n: int, reps: int, seed, workers: int = 1) -> np.ndarray:
    """Ratios estimate/M_n for replicates 0..reps-1 at size n (nan = undefined)."""
    if estimator_id not in ESTIMATOR_IDS:
        raise ValueError(f"unknown estimator {estimator_id!r}")
    base = [int(seed)] if np.isscalar(seed) else [int(v) for v in seed]

    def batch(start):
        stop = min(start + _BATCH, reps)
        draws = np.stack([dist.sample(np.random.default_rng(base + [n, r]), n) for r in range(start, stop)])
        return _batch_ratios(dist, estimator_id, draws)

    starts = range(0, reps, _BATCH)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(batch, starts))
    else:
        parts = [batch(s) for s in starts]
    return np.concatenate(parts) if parts else np.empty(0)


def curve_row(n: int, ratios: np.ndarray, eps: float) -> PacRow:
    ok = ~np.isnan(ratios)
    defined = ratios[ok]
    trials = int(defined.size)
    fails = int(np.sum(np.abs(defined - 1.0) > eps))
    freq = fails / trials if trials else 1.0
    mean_ratio = float(defined.mean()) if trials else math.nan
    return PacRow(n, freq, binomial_halfwidth(fails, trials, CURVE_Z), mean_ratio, int((~ok).sum()), int(ratios.size))


def failure_curve(cfg: PacConfig, workers: int = 1) -> PacCurve:
    rows = [
        curve_row(n, trial_ratios(cfg.dist, cfg.estimator_id, n, cfg.reps, cfg.seed, workers), cfg.eps)
        for n in cfg.n_grid
    ]
    return PacCurve(rows, cfg.eps, cfg.estimator_id, cfg.dist.to_spec())


def pac_verdict(curve: PacCurve, delta: float) -> str:
    """Three-valued verdict from the tail of the curve.

    consistent-with-PAC: the last ceil(len/3) rows all have freq + ci < delta;
    inconsistent: freq - ci > delta at the largest n; otherwise inconclusive.
    """
    if not curve.rows:
        raise ValueError("empty curve")
    tail = curve.rows[-math.ceil(len(curve.rows) / 3):]
    if all(r.failure_freq + r.ci_halfwidth < delta for r in tail):
        return CONSISTENT
    last = curve.rows[-1]
    if last.failure_freq - last.ci_halfwidth > delta:
        return INCONSISTENT
    return INCONCLUSIVE


def good_turing_bridge(dist: DiscreteDist, n: int, reps: int, seed) -> dict:
    """Monte Carlo mean of G_n next to the exact E[M_{n-1}].

    Returns the mean, its standard error, the exact value and the z-score.
    """
    from .estimators import expected_missing_mass

    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    total, total_sq, done = 0.0, 0.0, 0
    chunk = max(1, min(reps, 2_000_000 // n))
    while done < reps:
        r = min(chunk, reps - done)
        srt = np.sort(dist.sample(rng, r * n).reshape(r, n), axis=1)
        new = np.ones_like(srt, dtype=bool)
        new[:, 1:] = srt[:, 1:] != srt[:, :-1]
        last = np.ones_like(new)
        last[:, :-1] = new[:, 1:]
        g = (new & last).sum(axis=1) / n
        total += float(g.sum())
        total_sq += float((g * g).sum())
        done += r
    mean = total / reps
    var = max(total_sq / reps - mean * mean, 0.0) * reps / max(reps - 1, 1)
    se = math.sqrt(var / reps)
    exact = expected_missing_mass(dist, n - 1)
    return {"n": n, "reps": reps, "mean_gt": mean, "se": se, "exact": exact,
            "z": (mean - exact) / se if se > 0 else 0.0}


def localization_violation_rate(alpha: float, delta: float, n: int, reps: int, seed) -> tuple[float, int]:
    """Fraction of geometric(alpha) samples whose punctured segment leaves the
    localization bounds; also returns the violation count."""
    from .estimators import localization_bounds

    lower, upper = localization_bounds(alpha, delta, n)
    dist = GeometricDist(alpha)
    rng = np.random.default_rng(seed)
    chunk = max(1, min(reps, 4_000_000 // n))
    bad, done = 0, 0
    while done < reps:
        r = min(chunk, reps - done)
        draws = dist.sample(rng, r * n).reshape(r, n)
        v_plus = draws.max(axis=1)
        width = int(v_plus.max()) + 2
        seen = np.zeros((r, width), dtype=bool)
        seen[np.repeat(np.arange(r), n), draws.ravel() - 1] = True
        v_minus = np.argmin(seen, axis=1) + 1
        bad += int(np.sum((v_minus < lower) | (v_plus > upper)))
        done += r
    return bad / reps, bad
