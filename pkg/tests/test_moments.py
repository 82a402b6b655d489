import math

import pytest
from hypothesis import given, settings, strategies as st

from biggins import (CovQuery, cov_tail, normalized_tail_cov, ou_cov,
                     var_increment, var_Winf, var_Wr)
from biggins.errors import DomainError

BG_SIGMA2 = 0.1420127083438708
BG_M2 = 0.6420127083438708


def test_var_wr_base_case_is_sigma2():
    # the recursion grounds at r = 1 with Var W_1 = sigma2
    assert var_Wr(1.0 / 9.0, 2.0 / 3.0, 1) == pytest.approx(1.0 / 9.0,
                                                            rel=1e-15)


def test_var_wr_term_by_term_oracle():
    oracle = BG_SIGMA2 * (1.0 + BG_M2 + BG_M2 ** 2)
    assert oracle == pytest.approx(0.2917215150860356, rel=1e-12)
    assert var_Wr(BG_SIGMA2, BG_M2, 3) == pytest.approx(oracle, rel=1e-13)


def test_var_wr_zero_sigma():
    assert var_Wr(0.0, 0.5, 7) == 0.0


def test_var_winf_values():
    assert var_Winf(1.0 / 9.0, 2.0 / 3.0) == pytest.approx(1.0 / 3.0,
                                                           rel=1e-14)
    assert var_Winf(BG_SIGMA2, BG_M2) == pytest.approx(0.396697624898605,
                                                       rel=1e-12)
    assert var_Winf(0.0, 0.3) == 0.0


def test_var_winf_is_limit_of_var_wr():
    for r in (10, 40, 120):
        gap = abs(var_Wr(BG_SIGMA2, BG_M2, r) - var_Winf(BG_SIGMA2, BG_M2))
        assert gap == pytest.approx(
            var_Winf(BG_SIGMA2, BG_M2) * BG_M2 ** r, rel=1e-9)


def test_var_increment_examples():
    assert var_increment(0.37, 0.5, 0) == pytest.approx(0.37)
    # difference of cumulative variances as oracle
    d = var_Wr(1 / 9, 2 / 3, 3) - var_Wr(1 / 9, 2 / 3, 2)
    assert d == pytest.approx(4.0 / 81.0, rel=1e-12)
    assert var_increment(1 / 9, 2 / 3, 2) == pytest.approx(d, rel=1e-12)


def test_cov_tail_examples():
    assert cov_tail(0.25, 0.5, CovQuery(0, 0)) == pytest.approx(0.25)
    # sum of increment variances beyond level 5 as oracle
    oracle = math.fsum(var_increment(1 / 9, 2 / 3, k) for k in range(5, 400))
    assert oracle == pytest.approx(0.043895747599451286, rel=1e-9)
    assert cov_tail(1 / 3, 2 / 3, CovQuery(2, 5)) == pytest.approx(oracle,
                                                                   rel=1e-9)
    assert cov_tail(1 / 3, 2 / 3, CovQuery(5, 2)) == \
        cov_tail(1 / 3, 2 / 3, CovQuery(2, 5))


def test_ou_cov_examples():
    assert ou_cov(0.42, CovQuery(3, 3)) == 1.0
    assert ou_cov(2 / 3, CovQuery(0, 2)) == pytest.approx(2 / 3, rel=1e-15)
    assert ou_cov(2 / 3, CovQuery(0, 1)) == pytest.approx(
        0.816496580927726, rel=1e-12)
    # normalized tail covariance ratio as oracle
    num = cov_tail(1 / 3, 2 / 3, CovQuery(0, 2))
    den = math.sqrt(cov_tail(1 / 3, 2 / 3, CovQuery(0, 0))
                    * cov_tail(1 / 3, 2 / 3, CovQuery(2, 2)))
    assert ou_cov(2 / 3, CovQuery(0, 2)) == pytest.approx(num / den, rel=1e-12)


def test_normalized_tail_cov_examples():
    assert normalized_tail_cov(0.7, 0.5, 3, CovQuery(4, 4)) == \
        pytest.approx(0.7)
    assert normalized_tail_cov(1 / 3, 2 / 3, 4, CovQuery(1, 3)) == \
        pytest.approx(2.0 / 9.0, rel=1e-14)
    # direct expansion oracle: Cov(tail_{n+r}, tail_{n+s}) / m2^{n+(r+s)/2}
    n, r, s = 4, 1, 3
    oracle = cov_tail(1 / 3, 2 / 3, CovQuery(n + r, n + s)) \
        / (2 / 3) ** (n + (r + s) / 2)
    assert normalized_tail_cov(1 / 3, 2 / 3, n, CovQuery(r, s)) == \
        pytest.approx(oracle, rel=1e-12)


def test_domain_errors():
    for bad_m2 in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(DomainError):
            var_Wr(0.1, bad_m2, 2)
        with pytest.raises(DomainError):
            var_Winf(0.1, bad_m2)
    with pytest.raises(DomainError):
        CovQuery(-1, 0)


finite = dict(allow_nan=False, allow_infinity=False)


@settings(max_examples=80, deadline=None, derandomize=True)
@given(sigma2=st.floats(min_value=0.0, max_value=5.0, **finite),
       m2=st.floats(min_value=0.01, max_value=0.99, **finite),
       r=st.integers(min_value=1, max_value=40))
def test_telescoping_property(sigma2, m2, r):
    total = math.fsum(var_increment(sigma2, m2, k) for k in range(r))
    assert var_Wr(sigma2, m2, r) == pytest.approx(total, rel=1e-10,
                                                  abs=1e-12)


@settings(max_examples=80, deadline=None, derandomize=True)
@given(sigma2=st.floats(min_value=1e-6, max_value=5.0, **finite),
       m2=st.floats(min_value=0.01, max_value=0.99, **finite),
       r=st.integers(min_value=1, max_value=60))
def test_limit_gap_property(sigma2, m2, r):
    v2 = var_Winf(sigma2, m2)
    gap = abs(var_Wr(sigma2, m2, r) - v2)
    # the identity is exact in real arithmetic; in floats the subtraction
    # leaves cancellation noise of order v2 * ulp
    assert gap == pytest.approx(v2 * m2 ** r, rel=1e-9, abs=v2 * 5e-14)


@settings(max_examples=80, deadline=None, derandomize=True)
@given(v2=st.floats(min_value=1e-6, max_value=5.0, **finite),
       m2=st.floats(min_value=0.01, max_value=0.99, **finite),
       r=st.integers(min_value=0, max_value=30),
       s=st.integers(min_value=0, max_value=30),
       n=st.integers(min_value=0, max_value=12))
def test_tail_cov_properties(v2, m2, r, s, n):
    q = CovQuery(r, s)
    assert cov_tail(v2, m2, q) == cov_tail(v2, m2, CovQuery(s, r))
    assert cov_tail(v2, m2, CovQuery(r, r)) == pytest.approx(v2 * m2 ** r,
                                                             rel=1e-12)
    # constancy in n is exact
    assert normalized_tail_cov(v2, m2, 0, q) == \
        normalized_tail_cov(v2, m2, n, q)
