"""Exact second-moment formulas for the weighted-sum martingale.

These closed forms are the ground truth every statistical test downstream
is checked against.  Everything is evaluated without series truncation;
geometric sums use the stable form (1 - q^r) / (1 - q).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class CovQuery:
    """A pair of non-negative level offsets."""

    r: int
    s: int

    def __post_init__(self):
        if self.r < 0 or self.s < 0:
            raise DomainError("level indices must be non-negative")


def _check(sigma2: float, m2: float) -> None:
    if not (0.0 < m2 < 1.0):
        raise DomainError(f"m2 = {m2!r} must lie in (0, 1)")
    if sigma2 < 0.0:
        raise DomainError("sigma2 must be non-negative")


def var_Wr(sigma2: float, m2: float, r: int) -> float:
    """Var W_r = sigma2 * (1 + m2 + ... + m2^(r-1))."""
    _check(sigma2, m2)
    if r < 1:
        raise DomainError("r must be >= 1")
    return sigma2 * (1.0 - m2 ** r) / (1.0 - m2)


def var_Winf(sigma2: float, m2: float) -> float:
    """Var of the almost-sure limit: sigma2 / (1 - m2)."""
    _check(sigma2, m2)
    return sigma2 / (1.0 - m2)


def var_increment(sigma2: float, m2: float, r: int) -> float:
    """Var[W_{r+1} - W_r] = sigma2 * m2^r (increments are uncorrelated)."""
    _check(sigma2, m2)
    if r < 0:
        raise DomainError("r must be >= 0")
    return sigma2 * m2 ** r


def cov_tail(v2: float, m2: float, q: CovQuery) -> float:
    """Cov(W_inf - W_r, W_inf - W_s) = v2 * m2^max(r, s)."""
    _check(v2, m2)
    return v2 * m2 ** max(q.r, q.s)


def ou_cov(m2: float, q: CovQuery) -> float:
    """Covariance m2^(|r-s|/2) of the limiting unit-variance AR(1) sequence."""
    if not (0.0 < m2 < 1.0):
        raise DomainError(f"m2 = {m2!r} must lie in (0, 1)")
    return m2 ** (abs(q.r - q.s) / 2.0)


def normalized_tail_cov(v2: float, m2: float, n: int, q: CovQuery) -> float:
    """Covariance of the tail columns after m2^{(n+r)/2} scaling.

    Exactly v2 * m2^(|r-s|/2) at every level n; the n-dependence cancels
    algebraically, so this is an identity rather than an asymptotic.
    """
    _check(v2, m2)
    if n < 0:
        raise DomainError("n must be >= 0")
    return v2 * m2 ** (abs(q.r - q.s) / 2.0)
