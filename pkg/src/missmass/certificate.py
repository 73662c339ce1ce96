"""Numeric certificate for the pivotal-event constant eta.

For the coupled dithered samples of size n_k = C * 2**k the pivotal
probability obeys P(A_k) >= eta1(k) * eta2(k), where

    eta1(k) = (1 - 2**-(m+k-1) + beta * 2**-(m+k))**n_k
    eta2(k) = 1 - sum_{x<=m} (1 - 2**-x)**n_k
                - 2 sum_{j<k} (1 - beta 2**-(m+j))**n_k
                - (1 - beta 2**-(m+k))**n_k.

The infimum over all k >= 1 is reduced to the minimum over k = 1..K plus
the k -> infinity limit. A separate lower bound valid for every k > K is
derived from 1 - t >= exp(-t / (1 - t)) and (1 - t)**n <= exp(-n t); it is
our own bridging argument and the report labels it as such.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import mpmath

from .coupling import sample_size

DEFAULT_BETA = 0.25
DEFAULT_M = 1
DEFAULT_C = 6.5
DEFAULT_K = 50
DEFAULT_THRESHOLD = 2e-4


def _pow1m(t: float, n: float) -> float:
    """(1 - t)**n without cancellation for small t."""
    return math.exp(n * math.log1p(-t))


def _coverage_deficit(k: int, beta: float, m: int) -> float:
    # 1 - alpha_k, the mass outside {(x, x): x <= m+2k-1}
    return math.ldexp(1.0, -(m + k - 1)) - beta * math.ldexp(1.0, -(m + k))


def eta1(k: int, beta: float = DEFAULT_BETA, m: int = DEFAULT_M, C: float = DEFAULT_C) -> float:
    """P(A_{k,1}): every coupled pair lands on the diagonal up to m+2k-1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _pow1m(_coverage_deficit(k, beta, m), sample_size(C, k))


def eta2(k: int, beta: float = DEFAULT_BETA, m: int = DEFAULT_M, C: float = DEFAULT_C) -> float:
    """Union-bound lower bound on P(A_{k,2} | A_{k,1}); may be negative."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = sample_size(C, k)
    head = math.fsum(_pow1m(math.ldexp(1.0, -x), n) for x in range(1, m + 1))
    blocks = math.fsum(_pow1m(beta * math.ldexp(1.0, -(m + j)), n) for j in range(1, k))
    last = _pow1m(beta * math.ldexp(1.0, -(m + k)), n)
    return 1.0 - head - 2.0 * blocks - last


def _doubling_series(c: float) -> float:
    """sum_{i>=1} exp(-c * 2**i), summed until terms underflow."""
    total, i = 0.0, 1
    while True:
        term = math.exp(-c * 2.0 ** i)
        if term == 0.0:
            return total
        total += term
        i += 1


def limits(beta: float = DEFAULT_BETA, m: int = DEFAULT_M, C: float = DEFAULT_C) -> tuple[float, float]:
    """k -> infinity limits of eta1 and eta2.

    n_k * (1 - alpha_k) = C (2 - beta) / 2**m exactly, and the j-sum of eta2
    becomes a doubly exponential series after reindexing i = k - j.
    """
    lim1 = math.exp(-C * (2.0 - beta) / 2 ** m)
    c = C * beta / 2 ** m
    lim2 = 1.0 - 2.0 * _doubling_series(c) - math.exp(-c)
    return lim1, lim2


def tail_lower_bound(K: int, beta: float = DEFAULT_BETA, m: int = DEFAULT_M, C: float = DEFAULT_C) -> float:
    """A value <= eta1(k) * eta2(k) for every k > K (our bridging bound)."""
    t = _coverage_deficit(K + 1, beta, m)
    lb1 = math.exp(-C * (2.0 - beta) / 2 ** m / (1.0 - t))
    c = C * beta / 2 ** m
    n_next = C * 2 ** (K + 1)
    head = m * math.exp(-n_next / 2 ** m)
    lb2 = 1.0 - head - 2.0 * _doubling_series(c) - math.exp(-c)
    return lb1 * lb2 if lb2 > 0 else -math.inf


@dataclass
class CertRow:
    k: int
    n_k: int
    alpha_k: float
    eta1: float
    eta2: float
    product: float


@dataclass
class CertificateReport:
    rows: list[CertRow]
    limit_eta1: float
    limit_eta2: float
    limit_product: float
    min_product: float
    threshold: float
    passed: bool
    tail_bound: float
    params: dict = field(default_factory=dict)
    note: str = (
        "inf over k>=1 taken as min over k=1..K together with the k->inf limit; "
        "tail_bound lower-bounds eta1*eta2 for all k>K (bridging argument, not from the source proof)"
    )

    @property
    def argmin_k(self) -> int | None:
        best = min(self.rows, key=lambda r: r.product)
        return best.k if best.product <= self.limit_product else None

    def to_json(self) -> str:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return json.dumps(d, indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'k':>4} {'n_k':>22} {'alpha_k':>12} {'eta1':>12} {'eta2':>12} {'product':>12}"]
        for r in self.rows:
            lines.append(f"{r.k:>4} {r.n_k:>22} {r.alpha_k:>12.8f} {r.eta1:>12.6e} {r.eta2:>12.6e} {r.product:>12.6e}")
        lines.append(f"{'inf':>4} {'':>22} {'1':>12} {self.limit_eta1:>12.6e} {self.limit_eta2:>12.6e} {self.limit_product:>12.6e}")
        lines.append(f"min product  {self.min_product:.6e}  threshold {self.threshold:.1e}  "
                     f"{'PASS' if self.passed else 'FAIL'}")
        lines.append(f"bound for k > {len(self.rows)}: {self.tail_bound:.6e}")
        return "\n".join(lines) + "\n"


def _round_down(v) -> float:
    f = float(v)
    return math.nextafter(f, -math.inf) if mpmath.mpf(f) > v else f


def _eta_interval(k: int, beta: float, m: int, C: float) -> tuple[float, float]:
    """Lower endpoints of eta1(k), eta2(k) under outward-rounded interval arithmetic."""
    iv = mpmath.iv
    saved = iv.prec
    iv.prec = 113
    try:
        b = iv.mpf(beta)
        n = iv.mpf(sample_size(C, k))

        def pow1m(t):
            return iv.exp(n * iv.log(1 - t))

        two = iv.mpf(2)
        e1 = pow1m(two ** -(m + k - 1) - b * two ** -(m + k))
        e2 = iv.mpf(1)
        for x in range(1, m + 1):
            e2 -= pow1m(two ** -x)
        for j in range(1, k):
            e2 -= 2 * pow1m(b * two ** -(m + j))
        e2 -= pow1m(b * two ** -(m + k))
        return _round_down(e1.a), _round_down(e2.a)
    finally:
        iv.prec = saved


def eta_certificate(
    K: int = DEFAULT_K,
    beta: float = DEFAULT_BETA,
    m: int = DEFAULT_M,
    C: float = DEFAULT_C,
    threshold: float = DEFAULT_THRESHOLD,
    rigorous: bool = False,
) -> CertificateReport:
    """Tabulate eta1*eta2 for k = 1..K and compare the minimum to ``threshold``.

    With ``rigorous=True`` every row uses the lower endpoint of an interval
    evaluation instead of the double-precision value.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rows = []
    for k in range(1, K + 1):
        if rigorous:
            e1, e2 = _eta_interval(k, beta, m, C)
        else:
            e1, e2 = eta1(k, beta, m, C), eta2(k, beta, m, C)
        rows.append(CertRow(k, sample_size(C, k), 1.0 - _coverage_deficit(k, beta, m), e1, e2, e1 * e2))
    l1, l2 = limits(beta, m, C)
    lim = l1 * l2
    min_product = min([r.product for r in rows] + [lim])
    return CertificateReport(
        rows=rows,
        limit_eta1=l1,
        limit_eta2=l2,
        limit_product=lim,
        min_product=min_product,
        threshold=threshold,
        passed=min_product >= threshold,
        tail_bound=tail_lower_bound(K, beta, m, C),
        params={"beta": beta, "m": m, "C": C, "K": K, "rigorous": rigorous},
    )


def separation_ratio(beta: float) -> float:
    """M/M' on the pivotal event: (2 - beta) / (1 + beta)."""
    if not 0.0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    return (2.0 - beta) / (1.0 + beta)


def epsilon_admissible(eps: float, beta: float, eta: float) -> bool:
    """Whether eps is small enough for the coupling contradiction.

    Needs eps <= eta/2, which with P(A_k) > eta keeps P(A_k) - 2 eps > 0, and
    (1 + eps)/(1 - eps) < (2 - beta)/(1 + beta), so that one estimate cannot
    be eps-close to both separated masses.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if eps >= 1.0:
        return False
    return eps <= eta / 2.0 and (1.0 + eps) / (1.0 - eps) < separation_ratio(beta)
