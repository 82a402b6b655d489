"""Statistical verification of the tail central limit behavior.

The rescaled tail process of the weighted-sum martingale converges to a
Gaussian scale mixture driven by the second-exponent limit; finite windows
of the process are checked here against their exact covariance targets,
and conditional (frozen-tree) resampling checks the almost-sure version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov, ndtr

from .engine import (conditional_resample, simulate_trajectory,
                     simulate_with_snapshot)
from .errors import DegenerateSample, DomainError, EmptySample, ExtinctTree
from .model import OffspringModel, check_conditions, moment_set
from .numerics import csum
from .streams import derive, derive_seed


@dataclass(frozen=True)
class KsResult:
    """Kolmogorov-Smirnov distance with its asymptotic p-value."""

    statistic: float
    n1: int
    n2: int | None
    pvalue: float


def ks_two_sample(a, b) -> KsResult:
    """Two-sided two-sample KS test.

    The p-value uses the asymptotic Kolmogorov distribution at the
    effective sample size n*m/(n+m).
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    return KsResult(d, a.size, b.size, float(kolmogorov(math.sqrt(n_eff) * d)))


def ks_one_sample(a, cdf) -> KsResult:
    """One-sample KS test against a vectorizable cdf callable."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    if a.size == 0:
        raise EmptySample("sample must be non-empty")
    f = np.asarray(cdf(a), dtype=np.float64)
    i = np.arange(1, a.size + 1)
    d = float(max(np.max(i / a.size - f), np.max(f - (i - 1) / a.size)))
    return KsResult(d, a.size, None, float(kolmogorov(math.sqrt(a.size) * d)))


@dataclass(frozen=True)
class TailSampleMatrix:
    """Normalized tail values for M trees over a window of d levels.

    Column r holds (W_deep - W_{n+r}) / m2^((n+r)/2) with the shared deep
    proxy W_deep = W_{n+d-1+R}; the companion column holds the per-tree
    second-exponent proxies W_{n+d-1+R}(2).
    """

    n: int
    d: int
    proxy_depth: int
    values: np.ndarray      # (M, d)
    w2: np.ndarray          # (M,)
    survived: np.ndarray    # (M,) bool

    @property
    def n_trees(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_surviving(self) -> int:
        return int(np.count_nonzero(self.survived))


def tail_rows(model: OffspringModel, n: int, d: int, R: int, seed: int,
              lo: int, hi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized tail rows for trees lo..hi-1 (seeds derived per index)."""
    ms = moment_set(model)
    depth = n + d - 1 + R
    count = hi - lo
    values = np.empty((count, d))
    w2 = np.empty(count)
    surv = np.empty(count, dtype=bool)
    scale = ms.m2 ** ((n + np.arange(d)) / 2.0)
    for j, i in enumerate(range(lo, hi)):
        rec = simulate_trajectory(model, depth, derive_seed(seed, "tree", i))
        deep = rec.W1[depth]
        values[j] = (deep - rec.W1[n:n + d]) / scale
        w2[j] = rec.W2[depth]
        surv[j] = rec.survived
    return values, w2, surv


def tail_vector_sample(model: OffspringModel, n: int, d: int, R: int, M: int,
                       seed: int) -> TailSampleMatrix:
    """Simulate M independent trees and collect the normalized tail window."""
    report = check_conditions(model)
    for key in ("i", "ii", "iii"):
        if not report[key].passed:
            raise DomainError(f"model fails hypothesis ({key})")
    values, w2, surv = tail_rows(model, n, d, R, seed, 0, M)
    return TailSampleMatrix(n=n, d=d, proxy_depth=R, values=values, w2=w2,
                            survived=surv)


@dataclass(frozen=True)
class CovarianceReport:
    empirical: np.ndarray
    target: np.ndarray
    se: np.ndarray
    z: np.ndarray
    passed: bool


def covariance_test(ts: TailSampleMatrix, v2: float, m2: float,
                    n_boot: int = 200, seed: int = 0) -> CovarianceReport:
    """Empirical window covariance against v2 * m2^(|r-s|/2), entrywise.

    Bootstrap standard errors over trees; passes when every |z| <= 4.
    """
    if ts.n_trees < 1000:
        raise DomainError("need at least 1000 trees for the covariance test")
    x = ts.values
    d = ts.d
    emp = np.cov(x.T, ddof=1).reshape(d, d)
    rr, ss = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    target = v2 * m2 ** (np.abs(rr - ss) / 2.0)
    rng = derive(seed, "cov-boot")
    reps = np.empty((n_boot, d, d))
    for b in range(n_boot):
        idx = rng.integers(0, x.shape[0], x.shape[0])
        reps[b] = np.cov(x[idx].T, ddof=1).reshape(d, d)
    se = reps.std(axis=0, ddof=1)
    z = (emp - target) / se
    return CovarianceReport(emp, target, se, z, bool(np.max(np.abs(z)) <= 4.0))


def mixture_marginal_test(ts: TailSampleMatrix, w2_samples, v2: float,
                          seed: int) -> KsResult:
    """Two-sample KS between the first tail column and the synthesized
    scale mixture sqrt(v2 * w2) * Z.

    ``w2_samples`` must come from trees independent of ``ts`` (separate
    seed block); both sides are used unconditionally.
    """
    w2 = np.asarray(w2_samples, dtype=np.float64)
    if ts.n_surviving < 100 or int(np.count_nonzero(w2 > 0)) < 100:
        raise DegenerateSample("fewer than 100 surviving entries")
    z = derive(seed, "mixture-z").standard_normal(w2.size)
    synth = np.sqrt(v2 * w2) * z
    return ks_two_sample(ts.values[:, 0], synth)


@dataclass(frozen=True)
class ConditionalTreeResult:
    tree_index: int
    population: int
    cond_var: float
    ks: KsResult


def conditional_normality_test(model: OffspringModel, n: int, r: int, R: int,
                               K: int, trees: int, seed: int
                               ) -> list[ConditionalTreeResult]:
    """Frozen-tree conditional normality checks.

    For each of ``trees`` independent trees surviving to level n, draws K
    conditional resamples and runs a one-sample KS test against the centered
    normal law whose variance is the exactly computable conditional variance
    v2 * m2^(-n) * sum_u exp(-2 S(u)) of the frozen generation.
    """
    ms = moment_set(model)
    out = []
    attempts = 0
    t = 0
    while len(out) < trees:
        if attempts > 50 * trees:
            raise ExtinctTree("too many extinct trees while freezing")
        attempts += 1
        tree_seed = derive_seed(seed, "freeze", t)
        t += 1
        _, snaps = simulate_with_snapshot(model, n, tree_seed, (n,))
        gen = snaps[n]
        if gen.extinct:
            continue
        cond_var = ms.v2 * ms.m2 ** (-n) * csum(np.exp(-2.0 * gen.positions))
        draws = conditional_resample(gen, model, r, R, K,
                                     derive(seed, "resample", t - 1))
        sd = math.sqrt(cond_var)
        ks = ks_one_sample(draws, lambda x: ndtr(x / sd))
        out.append(ConditionalTreeResult(t - 1, gen.size, cond_var, ks))
    return out


@dataclass(frozen=True)
class LogCltReport:
    ks: KsResult
    n_excluded_tail: int
    n_excluded_synth: int
    conditioned_on_survival: bool


def log_clt_test(model: OffspringModel, n: int, R: int, M: int,
                 seed: int) -> LogCltReport:
    """Two-sample KS for the log-transformed tail.

    Compares (log W_deep - log W_n) / m2^(n/2) against the synthesized
    sqrt(v2 * w2 / w1^2) * Z built from paired deep proxies (w1, w2) of
    independent trees.  Extinct trees are excluded on both sides and the
    counts reported; for models with certain survival nothing is excluded.
    """
    ms = moment_set(model)
    depth = n + R
    tails = np.empty(M)
    keep_a = np.zeros(M, dtype=bool)
    for i in range(M):
        rec = simulate_trajectory(model, depth, derive_seed(seed, "log-a", i))
        if rec.W1[depth] > 0 and rec.W1[n] > 0:
            tails[i] = (math.log(rec.W1[depth]) - math.log(rec.W1[n])) \
                / ms.m2 ** (n / 2.0)
            keep_a[i] = True
    w1 = np.empty(M)
    w2 = np.empty(M)
    keep_b = np.zeros(M, dtype=bool)
    for i in range(M):
        rec = simulate_trajectory(model, depth, derive_seed(seed, "log-b", i))
        if rec.W1[depth] > 0:
            w1[i] = rec.W1[depth]
            w2[i] = rec.W2[depth]
            keep_b[i] = True
    n_a = int(np.count_nonzero(keep_a))
    n_b = int(np.count_nonzero(keep_b))
    if n_a < 100 or n_b < 100:
        raise DegenerateSample("fewer than 100 surviving entries")
    z = derive(seed, "log-z").standard_normal(n_b)
    synth = np.sqrt(ms.v2 * w2[keep_b] / w1[keep_b] ** 2) * z
    ks = ks_two_sample(tails[keep_a], synth)
    return LogCltReport(ks=ks, n_excluded_tail=M - n_a,
                        n_excluded_synth=M - n_b,
                        conditioned_on_survival=(n_a < M or n_b < M))
