"""Law-of-the-iterated-logarithm scanner.

Tracks the running extremes of the normalized tail sequence

    R_n = (W_inf - W_n) / sqrt(m2^n * log n),      n = 2, ..., N

against the tree's random bound B = sqrt(2 * v2 * W_inf(2)).  The almost
sure limsup equals +B and the liminf equals -B, but convergence is
logarithmic, so desk-scale acceptance is property-based: band containment,
exact monotonicity of the running extremes, and max/-min symmetry.  Both
limit proxies come from the same deep level N + R of the same tree.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .clt import ks_two_sample
from .engine import TrajectoryRecord, simulate_trajectory
from .errors import InsufficientDepth
from .model import OffspringModel, moment_set


@dataclass(frozen=True)
class LilScan:
    """Running-extreme scan of one trajectory."""

    n: np.ndarray          # levels 2..N
    r_vals: np.ndarray     # normalized tail values R_n
    run_max: np.ndarray    # running maxima M_n
    run_min: np.ndarray    # running minima
    bound: float           # B = sqrt(2 v2 W_deep(2))
    proxy_depth: int

    @property
    def depth(self) -> int:
        return int(self.n[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,R_n,run_max,run_min,B\n")
        for i, n in enumerate(self.n):
            buf.write(f"{int(n)},{self.r_vals[i]:.17g},{self.run_max[i]:.17g},"
                      f"{self.run_min[i]:.17g},{self.bound:.17g}\n")
        return buf.getvalue()


def lil_scan(traj: TrajectoryRecord, v2: float, m2: float, R: int) -> LilScan:
    """Scan levels 2..(depth - R) of a recorded trajectory.

    The level depth - R is scanned against the deep proxy W_{depth}, so the
    proxy error stays below the design budget at every scanned level.
    Extinct trees scan degenerately (all zero, bound zero).
    """
    N = traj.depth - R
    if N < 2:
        raise InsufficientDepth("need trajectory depth >= R + 2")
    ns = np.arange(2, N + 1)
    deep = traj.W1[traj.depth]
    r_vals = (deep - traj.W1[2:N + 1]) / np.sqrt(m2 ** ns * np.log(ns))
    bound = math.sqrt(2.0 * v2 * traj.W2[traj.depth])
    return LilScan(n=ns, r_vals=r_vals,
                   run_max=np.maximum.accumulate(r_vals),
                   run_min=np.minimum.accumulate(r_vals),
                   bound=bound, proxy_depth=R)


@dataclass(frozen=True)
class LilBandReport:
    n_scans: int
    n_surviving: int
    band: tuple[float, float]
    frac_max_in_band: float
    frac_min_in_band: float
    frac_monotone: float       # share with M_N >= M_{N/2}; 1 by construction
    mean_growth: float         # mean of M_N - M_{N/2}
    symmetry_ks_stat: float
    symmetry_ks_pvalue: float


def lil_band_report(scans: list[LilScan], band: tuple[float, float]
                    ) -> LilBandReport:
    """Aggregate band containment and symmetry over surviving scans.

    A scan survives when its bound is positive (the tree reached the deep
    proxy level).  Minima are reported against -B, i.e. via -min/B.
    """
    surviving = [s for s in scans if s.bound > 0]
    if len(surviving) < 50:
        raise ValueError("need at least 50 surviving scans")
    lo, hi = band
    max_ratio = np.array([s.run_max[-1] / s.bound for s in surviving])
    min_ratio = np.array([-s.run_min[-1] / s.bound for s in surviving])
    half_idx = [np.searchsorted(s.n, s.depth // 2) for s in surviving]
    m_half = np.array([s.run_max[min(i, len(s.run_max) - 1)]
                       for s, i in zip(surviving, half_idx)])
    m_full = np.array([s.run_max[-1] for s in surviving])
    ks = ks_two_sample(max_ratio, min_ratio)
    return LilBandReport(
        n_scans=len(scans),
        n_surviving=len(surviving),
        band=(lo, hi),
        frac_max_in_band=float(np.mean((max_ratio >= lo) & (max_ratio <= hi))),
        frac_min_in_band=float(np.mean((min_ratio >= lo) & (min_ratio <= hi))),
        frac_monotone=float(np.mean(m_full >= m_half)),
        mean_growth=float(np.mean(m_full - m_half)),
        symmetry_ks_stat=ks.statistic,
        symmetry_ks_pvalue=ks.pvalue,
    )


def gw_lil_scan(pmf, N: int, seed: int, R: int,
                pop_cap: int = 50_000_000) -> LilScan:
    """LIL scan of a plain Galton-Watson population martingale.

    Runs the displacement embedding (every child displaced by log mean), for
    which the weighted sums coincide with the normalized population counts,
    and scans it with the embedding's own constants
    v2 = s2 / (mean * (mean - 1)) and m2 = 1 / mean.
    """
    model = OffspringModel.galton_watson(pmf)
    ms = moment_set(model)
    traj = simulate_trajectory(model, N + R, seed, pop_cap=pop_cap)
    return lil_scan(traj, ms.v2, ms.m2, R)
