import json
import math
import time
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from missmass.certificate import (
    epsilon_admissible,
    eta1,
    eta2,
    eta_certificate,
    limits,
    separation_ratio,
    tail_lower_bound,
)
from missmass.coupling import CouplingParams, CoupledSample, coupled_missing_masses

import numpy as np

# 50-digit mpmath evaluation of min_k eta1*eta2 (beta=1/4, m=1, C=6.5, k<=200)
ORACLE_MIN = 2.557380234519813e-4
ORACLE_ARGMIN = 3
ORACLE_LIMIT = 2.773782499332866e-4


def mp_eta(k, beta=Fraction(1, 4), m=1, C=Fraction(13, 2)):
    mpmath.mp.dps = 50
    b = mpmath.mpf(beta.numerator) / beta.denominator
    n = int(C * 2 ** k)
    two = mpmath.mpf(2)
    e1 = (1 - two ** -(m + k - 1) + b * two ** -(m + k)) ** n
    e2 = 1 - sum((1 - two ** -x) ** n for x in range(1, m + 1))
    e2 -= 2 * sum((1 - b * two ** -(m + j)) ** n for j in range(1, k))
    e2 -= (1 - b * two ** -(m + k)) ** n
    return e1, e2


def test_eta1_k1_exact():
    exact = Fraction(9, 16) ** 13
    assert eta1(1) == pytest.approx(float(exact), rel=1e-14)


def test_eta2_exact_small_k():
    e2_1 = 1 - Fraction(1, 2) ** 13 - Fraction(15, 16) ** 13
    e2_2 = 1 - Fraction(1, 2) ** 26 - 2 * Fraction(15, 16) ** 26 - Fraction(31, 32) ** 26
    assert eta2(1) == pytest.approx(float(e2_1), rel=1e-14)
    assert eta2(2) == pytest.approx(float(e2_2), rel=1e-13)
    assert eta2(1) == pytest.approx(0.5677, abs=1e-4)
    assert eta2(2) == pytest.approx(0.188, abs=1e-3)


def test_eta1_beta_zero_degenerates():
    assert eta1(1, beta=0.0) == pytest.approx(0.5 ** 13, rel=1e-14)


def test_eta2_large_C_tends_to_one():
    assert eta2(2, C=6.5 * 2 ** 10) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 10, 30])
def test_against_mpmath(k):
    e1, e2 = mp_eta(k)
    assert eta1(k) == pytest.approx(float(e1), rel=1e-12)
    assert eta2(k) == pytest.approx(float(e2), rel=1e-12)


def test_limits():
    l1, l2 = limits()
    assert l1 == pytest.approx(math.exp(-5.6875), rel=1e-15)
    assert l1 == pytest.approx(3.39e-3, abs=1e-5)
    assert l1 * l2 == pytest.approx(ORACLE_LIMIT, rel=1e-12)
    e1, e2 = mp_eta(40)
    assert l1 == pytest.approx(float(e1), rel=1e-9)
    assert l2 == pytest.approx(float(e2), rel=1e-9)


def test_certificate_defaults():
    t0 = time.perf_counter()
    rep = eta_certificate()
    assert time.perf_counter() - t0 < 1.0
    assert rep.passed
    assert 2e-4 <= rep.min_product <= 1e-3
    assert rep.min_product == pytest.approx(ORACLE_MIN, rel=1e-12)
    assert rep.argmin_k == ORACLE_ARGMIN
    assert rep.min_product == min([r.product for r in rep.rows] + [rep.limit_product])
    assert len(rep.rows) == 50
    assert abs(rep.rows[-1].product - rep.limit_product) < 1e-6 * rep.limit_product
    assert 0 < rep.tail_bound <= rep.limit_product
    assert json.loads(rep.to_json())["pass"] is True


def test_limit_gap_shrinks():
    gaps = [abs(eta_certificate(K).rows[-1].product - eta_certificate(K).limit_product) for K in (5, 10, 20)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_certificate_failures():
    assert not eta_certificate(threshold=1e-2).passed
    rep = eta_certificate(C=1.0)
    assert not rep.passed
    assert rep.rows[0].eta2 < 0


def test_rigorous_mode_brackets():
    plain = eta_certificate(K=12)
    rig = eta_certificate(K=12, rigorous=True)
    for a, b in zip(plain.rows, rig.rows):
        assert b.eta1 <= a.eta1 * (1 + 1e-15)
        assert b.eta1 == pytest.approx(a.eta1, rel=1e-12)
        assert b.eta2 == pytest.approx(a.eta2, rel=1e-12)
    assert rig.passed


def test_tail_bound_holds():
    for K in (3, 8, 15):
        lb = tail_lower_bound(K)
        for k in range(K + 1, K + 30):
            assert lb <= eta1(k) * eta2(k)


def test_monotone_on_grid():
    for k in (1, 2, 4, 8):
        betas = [0.05, 0.15, 0.25, 0.35, 0.45]
        e1b = [eta1(k, beta=b) for b in betas]
        assert all(b > a for a, b in zip(e1b, e1b[1:]))
        Cs = [6.5, 13.0, 26.0, 52.0]
        e1c = [eta1(k, C=c) for c in Cs]
        e2c = [eta2(k, C=c) for c in Cs]
        assert all(b < a for a, b in zip(e1c, e1c[1:]))
        assert all(b >= a for a, b in zip(e2c, e2c[1:]))


def test_separation_ratio():
    assert separation_ratio(0.25) == 1.4
    assert separation_ratio(0.4999999) == pytest.approx(1.0, abs=1e-6)
    assert separation_ratio(1e-9) == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(ValueError):
        separation_ratio(0.5)


def test_admissibility_examples():
    assert epsilon_admissible(1e-4, 0.25, 2e-4)
    assert not epsilon_admissible(1 / 6, 0.25, 2e-4)
    assert not epsilon_admissible(1.1e-4, 0.25, 2e-4)
    assert not epsilon_admissible(1 / 6, 0.25, 1.0)
    assert epsilon_admissible(0.16, 0.25, 1.0)
    assert not epsilon_admissible(1 / 6 + 1e-12, 0.25, 1.0)
    assert epsilon_admissible(1 / 6 - 1e-12, 0.25, 1.0)


@given(
    eps=st.floats(1e-9, 0.5),
    k=st.integers(1, 6),
    m_hat=st.floats(0.0, 1.0),
)
def test_contradiction_engine(eps, k, m_hat):
    """On a pivotal sample no single estimate is eps-close to both masses."""
    if not epsilon_admissible(eps, 0.25, 1.0):
        return
    p = CouplingParams(0.25, 1, k)
    v = np.arange(1, p.first_cell + 1)
    mass, mass_p = coupled_missing_masses(CoupledSample(np.column_stack([v, v]), p))
    scaled = m_hat * 2 * mass
    close = abs(scaled / mass - 1) <= eps
    close_p = abs(scaled / mass_p - 1) <= eps
    assert not (close and close_p)
