"""Distribution families on the positive integers.

Four families are supported: geometric, the beta-dithered geometric(1/2),
Zipf (power law) and stretched exponential. Every family exposes an exact or
certified-numeric pmf, the tail mass ``P{X >= x0}`` and seeded sampling.
Distributions are frozen dataclasses and can be shared between workers;
sampling always takes an explicit generator or seed.

Distribution specs serialize to a flat key-value text form::

    family = dithered
    beta = 0.25
    m = 1
    theta = +-+
    theta_default = -

Theta flags: ``-`` selects ``beta`` and ``+`` selects ``1 - beta``.
"""

from __future__ import annotations

import configparser
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, ClassVar, Mapping, Sequence

import numpy as np
from scipy import special

SeedLike = int | Sequence[int] | np.random.SeedSequence | None

LOW_FLAG = "-"
HIGH_FLAG = "+"
_FLAG_ALIASES = {"-": LOW_FLAG, "−": LOW_FLAG, "+": HIGH_FLAG}

# Stretched-exponential table ends where 2**(-x**alpha) drops below this.
_STRETCHED_TERM_FLOOR = 1e-18
_STRETCHED_MAX_TABLE = 20_000_000


def normalize_flags(flags: str) -> str:
    """Map a theta flag string onto ASCII ``+``/``-``; reject anything else."""
    out = []
    for ch in flags.strip():
        if ch not in _FLAG_ALIASES:
            raise ValueError(f"invalid theta flag {ch!r}; expected '+' or '-'")
        out.append(_FLAG_ALIASES[ch])
    return "".join(out)


class DiscreteDist:
    """Base class for distributions on {1, 2, ...}.

    Subclasses implement ``_pmf_array``, ``tail_mass`` and ``sample``.
    """

    family: ClassVar[str]

    def pmf(self, x):
        """Probability of symbol ``x`` (scalar or array, all entries >= 1)."""
        arr = np.asarray(x, dtype=np.int64)
        if np.any(arr < 1):
            raise ValueError("pmf is defined on the positive integers")
        out = self._pmf_array(np.atleast_1d(arr))
        if arr.ndim == 0:
            return float(out[0])
        return out.reshape(arr.shape)

    def _pmf_array(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tail_mass(self, x0: int) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class GeometricDist(DiscreteDist):
    """pmf(x) = (1 - alpha) * alpha**(x - 1)."""

    alpha: float
    family: ClassVar[str] = "geometric"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"geometric alpha must lie in (0, 1), got {self.alpha}")

    @property
    def mean(self) -> float:
        return 1.0 / (1.0 - self.alpha)

    @property
    def variance(self) -> float:
        return self.alpha / (1.0 - self.alpha) ** 2

    def _pmf_array(self, x):
        return (1.0 - self.alpha) * np.power(self.alpha, (x - 1).astype(np.float64))

    def tail_mass(self, x0: int) -> float:
        if x0 < 1:
            raise ValueError("x0 must be >= 1")
        return self.alpha ** (x0 - 1)

    def sample(self, rng, size):
        return rng.geometric(1.0 - self.alpha, size=size).astype(np.int64)

    def to_spec(self):
        return {"family": self.family, "alpha": self.alpha}


@dataclass(frozen=True)
class DitheredGeometricDist(DiscreteDist):
    """Geometric(1/2) with each block beyond ``m`` split as theta_j : 1 - theta_j.

    pmf(x) = 2**-x for x <= m; pmf(m+2j-1) = theta_j / 2**(m+j) and
    pmf(m+2j) = (1 - theta_j) / 2**(m+j). ``theta_prefix`` fixes theta_1,
    theta_2, ...; indices past the prefix use ``theta_default``.
    """

    beta: float
    m: int
    theta_prefix: str = ""
    theta_default: str = LOW_FLAG
    family: ClassVar[str] = "dithered"

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "theta_prefix", normalize_flags(self.theta_prefix))
        default = normalize_flags(self.theta_default)
        if len(default) != 1:
            raise ValueError("theta_default must be a single flag")
        object.__setattr__(self, "theta_default", default)

    def _flag_value(self, flag: str) -> float:
        return self.beta if flag == LOW_FLAG else 1.0 - self.beta

    def theta(self, j: int) -> float:
        """theta_j for block index j >= 1."""
        if j < 1:
            raise ValueError("block index starts at 1")
        flag = self.theta_prefix[j - 1] if j <= len(self.theta_prefix) else self.theta_default
        return self._flag_value(flag)

    def theta_values(self, j: np.ndarray) -> np.ndarray:
        prefix = np.array([self._flag_value(f) for f in self.theta_prefix], dtype=np.float64)
        out = np.full(j.shape, self._flag_value(self.theta_default), dtype=np.float64)
        inside = (j >= 1) & (j <= len(prefix))
        out[inside] = prefix[j[inside] - 1]
        return out

    def block_of(self, x: int) -> int:
        """Block index j holding symbol x (0 for the undithered head x <= m)."""
        return 0 if x <= self.m else (x - self.m + 1) // 2

    def _pmf_array(self, x):
        m = self.m
        out = np.ldexp(1.0, -np.minimum(x, 1070).astype(np.int32))
        tail = x > m
        if np.any(tail):
            xt = x[tail]
            j = (xt - m + 1) // 2
            th = self.theta_values(j)
            first = (xt - m) % 2 == 1
            w = np.where(first, th, 1.0 - th)
            out[tail] = np.ldexp(w, -(m + j).astype(np.int32))
        return out

    def tail_mass(self, x0: int) -> float:
        if x0 < 1:
            raise ValueError("x0 must be >= 1")
        m = self.m
        if x0 <= m + 1:
            return math.ldexp(1.0, -(x0 - 1))
        r = x0 - m
        j = (r + 1) // 2
        if r % 2 == 1:
            return math.ldexp(1.0, -(m + j - 1))
        return math.ldexp(1.0 - self.theta(j), -(m + j)) + math.ldexp(1.0, -(m + j))

    def sample(self, rng, size):
        # level ~ geometric(1/2) has P(level = l) = 2**-l, the mass of block l - m
        level = rng.geometric(0.5, size=size).astype(np.int64)
        u = rng.random(size)
        out = level.copy()
        beyond = level > self.m
        j = level[beyond] - self.m
        first = u[beyond] < self.theta_values(j)
        out[beyond] = np.where(first, self.m + 2 * j - 1, self.m + 2 * j)
        return out

    def to_spec(self):
        return {
            "family": self.family,
            "beta": self.beta,
            "m": self.m,
            "theta": self.theta_prefix,
            "theta_default": self.theta_default,
        }


@dataclass(frozen=True)
class ZipfDist(DiscreteDist):
    """pmf(x) = x**(-1/alpha) / zeta(1/alpha), alpha in (0, 1)."""

    alpha: float
    family: ClassVar[str] = "zipf"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"zipf alpha must lie in (0, 1), got {self.alpha}")

    @property
    def exponent(self) -> float:
        return 1.0 / self.alpha

    @cached_property
    def normalizer(self) -> float:
        return float(special.zeta(self.exponent))

    def _pmf_array(self, x):
        return np.power(x.astype(np.float64), -self.exponent) / self.normalizer

    def tail_mass(self, x0: int) -> float:
        if x0 < 1:
            raise ValueError("x0 must be >= 1")
        if x0 == 1:
            return 1.0
        return float(special.zeta(self.exponent, x0)) / self.normalizer

    def sample(self, rng, size):
        """Devroye's rejection sampler with the continuous Pareto envelope."""
        a = self.exponent
        am1 = a - 1.0
        b = 2.0 ** am1
        out = np.empty(size, dtype=np.int64)
        pending = np.arange(size)
        # values past 2**62 are rejected; their total mass is below 2**-62*(a-1)
        limit = float(2 ** 62)
        while pending.size:
            k = pending.size
            u = 1.0 - rng.random(k)
            v = rng.random(k)
            with np.errstate(over="ignore"):
                x = np.floor(np.power(u, -1.0 / am1))
            ok = (x >= 1.0) & (x < limit)
            t = np.power(1.0 + 1.0 / np.where(ok, x, 1.0), am1)
            ok &= v * x * (t - 1.0) / (b - 1.0) <= t / b
            out[pending[ok]] = x[ok].astype(np.int64)
            pending = pending[~ok]
        return out

    def to_spec(self):
        return {"family": self.family, "alpha": self.alpha}


@dataclass(frozen=True)
class StretchedExpDist(DiscreteDist):
    """pmf(x) = 2**(-x**alpha) / Z with Z summed numerically.

    Terms are tabulated until they fall below 1e-18; the remainder of the
    series is the incomplete-gamma integral from the table end, which
    brackets the discrete sum within one term (< 1e-18).
    """

    alpha: float
    family: ClassVar[str] = "stretched_exp"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"stretched_exp alpha must lie in (0, 1), got {self.alpha}")
        if self.table_size > _STRETCHED_MAX_TABLE:
            raise ValueError(
                f"alpha={self.alpha} needs {self.table_size} tabulated terms; "
                f"the limit is {_STRETCHED_MAX_TABLE} (alpha >= ~0.26)"
            )

    @property
    def table_size(self) -> int:
        return int(math.floor(math.log2(1.0 / _STRETCHED_TERM_FLOOR) ** (1.0 / self.alpha)))

    def _integral_from(self, t: float) -> float:
        """Integral of 2**(-u**alpha) over [t, inf)."""
        a = 1.0 / self.alpha
        ln2 = math.log(2.0)
        return a * ln2 ** (-a) * float(special.gammaincc(a, t ** self.alpha * ln2) * special.gamma(a))

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray, float]:
        x = np.arange(1, self.table_size + 1, dtype=np.float64)
        w = np.exp2(-np.power(x, self.alpha))
        remainder = self._integral_from(self.table_size + 0.5)
        # reversed cumulative sum keeps small tails accurate
        tails = np.cumsum(w[::-1])[::-1] + remainder
        z = math.fsum(w) + remainder
        return w / z, tails / z, z

    @property
    def normalizer(self) -> float:
        return self._table[2]

    def _pmf_array(self, x):
        return np.exp2(-np.power(x.astype(np.float64), self.alpha)) / self.normalizer

    def tail_mass(self, x0: int) -> float:
        if x0 < 1:
            raise ValueError("x0 must be >= 1")
        _, tails, z = self._table
        if x0 <= tails.size:
            return float(tails[x0 - 1])
        return self._integral_from(x0 - 0.5) / z

    def sample(self, rng, size):
        p, _, _ = self._table
        cdf = np.cumsum(p)
        u = rng.random(size)
        out = np.searchsorted(cdf, u, side="right").astype(np.int64) + 1
        # u beyond the table (mass < 1e-15): continue the inversion term by term
        for i in np.flatnonzero(out > p.size):
            acc, x = cdf[-1], p.size
            while acc <= u[i]:
                x += 1
                acc += self.pmf(x)
                if x > 100 * p.size:
                    break
            out[i] = x
        return out

    def to_spec(self):
        return {"family": self.family, "alpha": self.alpha}


FAMILIES: dict[str, type[DiscreteDist]] = {
    cls.family: cls for cls in (GeometricDist, DitheredGeometricDist, ZipfDist, StretchedExpDist)
}


@dataclass(frozen=True)
class SampleSummary:
    """Counts of an n-sample: symbol -> multiplicity."""

    counts: Mapping[int, int]
    n: int = field(default=-1)

    def __post_init__(self):
        counts = {int(k): int(v) for k, v in self.counts.items() if v}
        if any(k < 1 for k in counts):
            raise ValueError("symbols must be positive integers")
        if any(v < 0 for v in counts.values()):
            raise ValueError("counts must be nonnegative")
        total = sum(counts.values())
        n = total if self.n == -1 else int(self.n)
        if n != total:
            raise ValueError(f"counts sum to {total}, but n={n}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_draws(cls, draws) -> "SampleSummary":
        values, mult = np.unique(np.asarray(draws, dtype=np.int64), return_counts=True)
        return cls(dict(zip(values.tolist(), mult.tolist())), int(mult.sum()))

    @property
    def symbols(self) -> np.ndarray:
        return np.array(sorted(self.counts), dtype=np.int64)

    @property
    def total(self) -> int:
        """Sum of all observations (symbol times multiplicity)."""
        return sum(k * v for k, v in self.counts.items())

    def count(self, x: int) -> int:
        return self.counts.get(x, 0)


def pmf(dist: DiscreteDist, x):
    return dist.pmf(x)


def tail_mass(dist: DiscreteDist, x0: int) -> float:
    return dist.tail_mass(x0)


def draw_n(dist: DiscreteDist, n: int, seed: SeedLike) -> SampleSummary:
    """Draw n i.i.d. symbols; a pure function of (dist, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return SampleSummary.from_draws(dist.sample(rng, n))


def truncation_point(dist: DiscreteDist, tol: float = 1e-12) -> int:
    """Smallest x with tail_mass(x + 1) <= tol (doubling then bisection)."""
    hi = 1
    while dist.tail_mass(hi + 1) > tol:
        hi *= 2
        if hi > 2 ** 60:
            raise ValueError("tail does not drop below tol at a representable point")
    lo = hi // 2
    while lo < hi:
        mid = (lo + hi) // 2
        if dist.tail_mass(mid + 1) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


# -- serialization ---------------------------------------------------------

def dist_from_spec(spec: Mapping[str, Any]) -> DiscreteDist:
    """Build a distribution from a mapping such as ``{'family': 'zipf', 'alpha': 0.5}``."""
    spec = {str(k).strip().lower(): v for k, v in spec.items()}
    family = str(spec.get("family", "")).strip().lower()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")

    def need(key: str) -> Any:
        if key not in spec or spec[key] in ("", None):
            raise ValueError(f"family {family!r} requires parameter {key!r}")
        return spec[key]

    if family == "dithered":
        m = need("m")
        if float(m) != int(float(m)):
            raise ValueError(f"m must be an integer, got {m!r}")
        return DitheredGeometricDist(
            beta=float(need("beta")),
            m=int(float(m)),
            theta_prefix=str(spec.get("theta", "") or ""),
            theta_default=str(spec.get("theta_default", LOW_FLAG) or LOW_FLAG),
        )
    return FAMILIES[family](alpha=float(need("alpha")))


def dist_to_text(dist: DiscreteDist) -> str:
    return "".join(f"{k} = {v}\n" for k, v in dist.to_spec().items())


def dist_from_text(text: str) -> DiscreteDist:
    """Parse the flat key-value form produced by :func:`dist_to_text`."""
    parser = configparser.ConfigParser(interpolation=None)
    body = text if text.lstrip().startswith("[") else "[distribution]\n" + text
    parser.read_string(body)
    section = "distribution" if parser.has_section("distribution") else parser.sections()[0]
    return dist_from_spec(dict(parser[section]))


def empirical_frequencies(summary: SampleSummary) -> Counter:
    return Counter({k: v / summary.n for k, v in summary.counts.items()})
