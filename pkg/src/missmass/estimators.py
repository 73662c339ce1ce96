"""Missing-mass estimators and the analytical quantities around them.

The true missing mass M_n is the probability of the symbols absent from a
sample. Three estimators are provided (empirical, Good-Turing, geometric
plug-in) together with the parameter-convergence radius, the punctured
segment of a sample and its localization bounds, and the occupancy series
E[G_n] and E[#singletons].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import special

from .distributions import DiscreteDist, SampleSummary, ZipfDist

ESTIMATOR_IDS = ("empirical", "good_turing", "geometric_plugin")

# certified absolute error of the truncated occupancy series
SERIES_TOL = 1e-9
_MAX_SERIES_TERMS = 200_000_000


@dataclass
class EstimateResult:
    estimate: float
    estimator_id: str
    aux: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ValueError(f"unknown estimator {self.estimator_id!r}")
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError(f"estimate {self.estimate} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class PuncturedSegment:
    v_minus: int  # smallest missing symbol
    v_plus: int  # largest observed symbol

    def __post_init__(self):
        if self.v_minus > self.v_plus + 1:
            raise ValueError("v_minus cannot exceed v_plus + 1")


def missing_mass_true(dist: DiscreteDist, s: SampleSummary) -> float | None:
    """Exact M_n = 1 - sum of pmf over observed symbols.

    Returns None when the complement is not positive, which cannot happen
    for the infinite-support families but is reported rather than hidden.
    """
    covered = math.fsum(dist.pmf(s.symbols).tolist())
    mass = 1.0 - covered
    if mass <= 0.0:
        return None
    return mass


def good_turing(s: SampleSummary) -> EstimateResult:
    """Fraction of the sample made of symbols seen exactly once."""
    if s.n < 1:
        raise ValueError("empty sample")
    singletons = sum(1 for c in s.counts.values() if c == 1)
    return EstimateResult(singletons / s.n, "good_turing", {"singletons": singletons})


def empirical_missing(s: SampleSummary) -> EstimateResult:
    """Empirical probability of the unseen set, identically 0."""
    if s.n < 1:
        raise ValueError("empty sample")
    return EstimateResult(0.0, "empirical")


def alpha_hat(s: SampleSummary) -> float:
    """Moment estimate 1 - n / sum(X_i) of the geometric parameter."""
    if s.n < 1:
        raise ValueError("empty sample")
    return 1.0 - s.n / s.total


def geometric_plugin(s: SampleSummary) -> EstimateResult:
    """Geometric pmf with alpha_hat substituted, summed over the unseen set.

    Computed as the finite complement 1 - sum_{x observed} (1-a)a**(x-1).
    A result outside [0, 1] (rounding only) is clamped and flagged in aux.
    """
    a = alpha_hat(s)
    x = s.symbols
    if a == 0.0:
        covered = 1.0 if 1 in s.counts else 0.0
    else:
        covered = math.fsum(((1.0 - a) * np.power(a, (x - 1).astype(np.float64))).tolist())
    raw = 1.0 - covered
    est = min(max(raw, 0.0), 1.0)
    return EstimateResult(est, "geometric_plugin", {"alpha_hat": a, "clamped": est != raw, "raw": raw})


ESTIMATORS: dict[str, Callable[[SampleSummary], EstimateResult]] = {
    "empirical": empirical_missing,
    "good_turing": good_turing,
    "geometric_plugin": geometric_plugin,
}


def estimate(estimator_id: str, s: SampleSummary) -> EstimateResult:
    try:
        fn = ESTIMATORS[estimator_id]
    except KeyError:
        raise ValueError(f"unknown estimator {estimator_id!r}; expected one of {ESTIMATOR_IDS}") from None
    return fn(s)


def epsilon_n(alpha: float, delta: float, n: int) -> tuple[float, float]:
    """Relative-error radius of alpha_hat holding with probability > 1 - delta.

    Returns ``(eps_n, eta_n)`` with ``eta_n = eps_n / (1 - eps_n)``. Requires
    n > alpha / delta.
    """
    if not 0.0 < alpha < 1.0 or delta <= 0.0:
        raise ValueError("need alpha in (0, 1) and delta > 0")
    if n <= alpha / delta:
        raise ValueError(f"n={n} must exceed alpha/delta={alpha / delta:g}")
    r = math.sqrt(alpha / (delta * n))
    eps = r * max(1.0, (1.0 - alpha) / alpha) / (1.0 - r)
    if eps >= 1.0:
        return eps, math.inf
    return eps, eps / (1.0 - eps)


def punctured_segment(s: SampleSummary) -> PuncturedSegment:
    if s.n < 1:
        raise ValueError("empty sample")
    v_minus = 1
    while v_minus in s.counts:
        v_minus += 1
    return PuncturedSegment(v_minus, max(s.counts))


def localization_bounds(alpha: float, delta: float, n: int) -> tuple[float, float]:
    """Bounds L <= V_n^- and V_n^+ <= U holding jointly with probability >= 1 - delta
    for a geometric(alpha) sample."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < delta < (1.0 - alpha) / alpha ** 2:
        raise ValueError(f"delta must lie in (0, {(1.0 - alpha) / alpha ** 2:g}) for alpha={alpha}")
    base = math.log(1.0 / alpha)
    center = math.log(n) / base
    spread = math.log(1.0 / ((1.0 - alpha) * delta)) / base
    return center - spread, center + 1.0 + spread


def plugin_ratio_envelope(alpha: float, delta: float, n: int) -> tuple[float, float]:
    """Interval holding M_check/M_n with probability >= 1 - 2*delta (geometric(alpha)).

    Combines the parameter radius with the upper localization bound; the
    lower side uses V^- <= V^+ <= U as well.
    """
    _, eta = epsilon_n(alpha, delta, n)
    _, upper_v = localization_bounds(alpha, delta, n)
    g = 1.0 + eta
    if alpha * g >= 1.0:
        return 0.0, math.inf
    hi = g ** upper_v * (1.0 - alpha) * g / (1.0 - alpha * g)
    lo = g ** (-upper_v + 1.0) * (1.0 - alpha) / g / (1.0 - alpha / g)
    return lo, hi


def _occupancy_series(dist: DiscreteDist, n: int, power: int, scale: float, tol: float) -> float:
    """sum_x scale * p(x) * (1 - p(x))**power with certified truncation error < tol."""

    def terms(x):
        p = dist.pmf(x)
        return scale * p * np.exp(power * np.log1p(-np.minimum(p, 1.0 - 1e-300)))

    if isinstance(dist, ZipfDist):
        return _zipf_occupancy(dist, power, scale, tol, terms)

    # light tails: remaining contribution is at most scale * tail_mass(X)
    total, start, chunk = 0.0, 1, 1024
    partial = []
    while True:
        x = np.arange(start, start + chunk, dtype=np.int64)
        partial.append(math.fsum(terms(x).tolist()))
        start += chunk
        if scale * dist.tail_mass(start) < tol:
            break
        if start > _MAX_SERIES_TERMS:
            raise ValueError("series truncation point too large")
        chunk *= 2
    total = math.fsum(partial)
    return total


def _zipf_occupancy(dist: ZipfDist, power: int, scale: float, tol: float, terms) -> float:
    # Past X with p(X) <= 1/(power+1) the summand is decreasing, so the tail
    # sum lies in [I, I + f(X)] with I the integral; take the midpoint.
    s = dist.exponent
    z = dist.normalizer
    p_cut = min(2.0 * tol / scale, 1.0 / (power + 1.0))
    cut = int(math.ceil((1.0 / (z * p_cut)) ** (1.0 / s)))
    if cut > _MAX_SERIES_TERMS:
        raise ValueError(f"zipf series needs {cut} direct terms; raise tol or lower n")
    partial = []
    step = 1 << 20
    for start in range(1, cut, step):
        x = np.arange(start, min(start + step, cut), dtype=np.int64)
        partial.append(math.fsum(terms(x).tolist()))
    p_x = cut ** (-s) / z
    a, b = 1.0 - 1.0 / s, power + 1.0
    integral = scale / s * z ** (-1.0 / s) * float(special.betainc(a, b, p_x) * special.beta(a, b))
    f_cut = float(terms(np.array([cut]))[0])
    return math.fsum(partial) + integral + 0.5 * f_cut


def expected_singletons(dist: DiscreteDist, n: int, tol: float = SERIES_TOL) -> float:
    """E[number of singletons] = sum_x n p(x) (1 - p(x))**(n-1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _occupancy_series(dist, n, n - 1, float(n), tol)


def expected_missing_mass(dist: DiscreteDist, n: int, tol: float = SERIES_TOL) -> float:
    """E[M_n] = sum_x p(x) (1 - p(x))**n; also E[G_{n+1}]."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return _occupancy_series(dist, n, n, 1.0, tol)
