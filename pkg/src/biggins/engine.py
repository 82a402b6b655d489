"""Level-by-level branching random walk simulation.

The engine streams one generation at a time (flat position arrays, no
genealogy), accumulates the per-level weighted sums for several exponents
simultaneously with compensated summation, and keeps all positions in log
space so exponentials are only taken with the level shift applied first.

Galton-Watson embeddings, whose displacements are deterministic, get a
count-based fast path: only population sizes are simulated (multinomially),
which is distributionally exact for every per-level summary recorded here.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .errors import ExtinctTree, InsufficientDepth, PopulationCapExceeded
from .model import GALTON_WATSON, OffspringModel, laplace_transform, moment_set
from .numerics import csum, csum_rows
from .streams import derive

DEFAULT_POP_CAP = 50_000_000


@dataclass(frozen=True)
class Generation:
    """All individuals of one level: the level index and their positions."""

    level: int
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def size(self) -> int:
        return int(self.positions.size)

    @property
    def extinct(self) -> bool:
        return self.positions.size == 0


def ancestor() -> Generation:
    """Level 0: a single individual at the origin."""
    return Generation(0, np.zeros(1))


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-level scalar summaries of one simulated tree."""

    seed: int
    W1: np.ndarray          # weighted sums at exponent 1, levels 0..N
    W2: np.ndarray          # weighted sums at exponent 2
    pop: np.ndarray         # population counts
    sup_weight: np.ndarray  # sup of exp(-position) over the level

    @property
    def depth(self) -> int:
        return int(self.W1.size - 1)

    @property
    def survived(self) -> bool:
        return bool(self.pop[-1] > 0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,W1,W2,pop,sup_weight\n")
        for n in range(self.depth + 1):
            buf.write(f"{n},{self.W1[n]:.17g},{self.W2[n]:.17g},"
                      f"{int(self.pop[n])},{self.sup_weight[n]:.17g}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class TailEstimate:
    """A deep level used as a limit proxy, with its exact error scale."""

    level: int
    proxy_depth: int
    value: float
    error_std: float


def advance(g: Generation, model: OffspringModel, rng: np.random.Generator,
            pop_cap: int = DEFAULT_POP_CAP) -> Generation:
    """Spawn one new generation; extinction is absorbing.

    Raises PopulationCapExceeded when the child generation would exceed the
    hard cap; the run aborts rather than subsample.
    """
    if g.extinct:
        return Generation(g.level + 1, np.zeros(0))
    counts, disp = model_mod.sample_brood_batch(model, g.size, rng)
    total = int(counts.sum())
    if total > pop_cap:
        raise PopulationCapExceeded(
            f"level {g.level + 1} would hold {total} > cap {pop_cap}")
    child_pos = np.repeat(g.positions, counts) + disp
    return Generation(g.level + 1, child_pos)


def martingale(g: Generation, theta: float, m_theta: float) -> float:
    """Normalized weighted sum m(theta)^{-n} * sum_u exp(-theta S(u)).

    Evaluated as a compensated sum of exp(-theta S(u) - n log m(theta)) so
    neither the normalization nor the weights overflow on their own.
    """
    if not (0.0 < m_theta < math.inf):
        raise ValueError("m_theta must be positive and finite")
    if g.extinct:
        return 0.0
    shift = g.level * math.log(m_theta)
    return csum(np.exp(-theta * g.positions - shift))


def default_proxy_depth(m2: float, rel_budget: float = 0.1) -> int:
    """Smallest extra depth R with m2^(R/2) <= rel_budget.

    Using the deep level n+R as a limit proxy then keeps the truncation
    standard deviation below ``rel_budget`` of the tail scale at level n.
    """
    return max(1, math.ceil(2.0 * math.log(rel_budget) / math.log(m2)))


# -- single-tree simulation ---------------------------------------------------

def _record_level(g: Generation, logm1: float, logm2: float,
                  W1, W2, pop, supw) -> None:
    n = g.level
    if g.extinct:
        W1.append(0.0); W2.append(0.0); pop.append(0); supw.append(0.0)
        return
    W1.append(csum(np.exp(-g.positions - n * logm1)))
    W2.append(csum(np.exp(-2.0 * g.positions - n * logm2)))
    pop.append(g.size)
    supw.append(math.exp(-float(np.min(g.positions))))


def _safe_log(m: float) -> float:
    # m(theta) == 0 only for certain-extinction models whose levels past 0
    # are empty anyway; any finite shift then works
    return math.log(m) if m > 0 else 0.0


def _simulate_generic(model: OffspringModel, depth: int, seed: int,
                      pop_cap: int, snapshot_levels=()):
    rng = derive(seed, "traj")
    logm1 = _safe_log(laplace_transform(model, 1.0))
    logm2 = _safe_log(laplace_transform(model, 2.0))
    W1, W2, pop, supw = [], [], [], []
    snaps: dict[int, Generation] = {}
    g = ancestor()
    _record_level(g, logm1, logm2, W1, W2, pop, supw)
    if 0 in snapshot_levels:
        snaps[0] = g
    for _ in range(depth):
        g = advance(g, model, rng, pop_cap)
        _record_level(g, logm1, logm2, W1, W2, pop, supw)
        if g.level in snapshot_levels:
            snaps[g.level] = g
    rec = TrajectoryRecord(seed, np.array(W1), np.array(W2),
                           np.array(pop, dtype=np.int64), np.array(supw))
    return rec, snaps


def _simulate_gw_fast(model: OffspringModel, depth: int, seed: int,
                      pop_cap: int) -> TrajectoryRecord:
    # Deterministic displacements: a level is fully described by its count.
    rng = derive(seed, "traj")
    pmf = np.asarray(model.gw_pmf)
    ks = np.arange(pmf.size)
    logm = math.log(model.gw_mean)
    logm2 = math.log(laplace_transform(model, 2.0))
    W1 = [1.0]; W2 = [1.0]; pop = [1]; supw = [1.0]
    count = 1
    for n in range(1, depth + 1):
        if count > 0:
            count = int(np.dot(rng.multinomial(count, pmf), ks))
        if count > pop_cap:
            raise PopulationCapExceeded(
                f"level {n} would hold {count} > cap {pop_cap}")
        if count == 0:
            W1.append(0.0); W2.append(0.0); pop.append(0); supw.append(0.0)
            continue
        w = math.exp(-n * logm)
        W1.append(count * w)
        W2.append(count * math.exp(-n * (2.0 * logm + logm2)))
        pop.append(count)
        supw.append(w)
    return TrajectoryRecord(seed, np.array(W1), np.array(W2),
                            np.array(pop, dtype=np.int64), np.array(supw))


def simulate_trajectory(model: OffspringModel, depth: int, seed: int,
                        pop_cap: int = DEFAULT_POP_CAP) -> TrajectoryRecord:
    """Simulate levels 0..depth, keeping only per-level summaries.

    Deterministic given (model, depth, seed); the Galton-Watson embedding
    uses the count-based fast path.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if model.kind == GALTON_WATSON:
        return _simulate_gw_fast(model, depth, seed, pop_cap)
    rec, _ = _simulate_generic(model, depth, seed, pop_cap)
    return rec


def simulate_with_snapshot(model: OffspringModel, depth: int, seed: int,
                           snapshot_levels, pop_cap: int = DEFAULT_POP_CAP):
    """Simulate and also return frozen Generations at the given levels."""
    rec, snaps = _simulate_generic(model, depth, seed, pop_cap,
                                   snapshot_levels=frozenset(snapshot_levels))
    return rec, snaps


def tail_estimate(model: OffspringModel, n: int, R: int,
                  traj: TrajectoryRecord) -> TailEstimate:
    """Use W_{n+R} as the limit proxy for level n.

    The proxy error has exactly the tail-covariance standard deviation
    sqrt(v2 * m2^(n+R)); the estimate is unchanged on extinct trees.
    """
    if traj.depth < n + R:
        raise InsufficientDepth(
            f"trajectory depth {traj.depth} < n + R = {n + R}")
    ms = moment_set(model)
    err = math.sqrt(ms.v2 * ms.m2 ** (n + R))
    return TailEstimate(level=n, proxy_depth=R,
                        value=float(traj.W1[n + R]), error_std=err)


def max_weight_ratio(traj: TrajectoryRecord, m2: float) -> np.ndarray:
    """sup-weight of each level divided by m2^(n/2)."""
    ns = np.arange(traj.depth + 1)
    return traj.sup_weight / m2 ** (ns / 2.0)


# -- forests of independent subtrees ------------------------------------------

def _forest_tail_values(model: OffspringModel, n_roots: int, r: int, deep: int,
                        rng: np.random.Generator, pop_cap: int):
    """Per-root weighted sums W_r and W_deep for n_roots independent
    subtrees rooted at the origin (normalization m(1) = 1)."""
    if model.kind == GALTON_WATSON:
        return _gw_forest_tail_values(model, n_roots, r, deep, rng, pop_cap)
    pos = np.zeros(n_roots)
    ids = np.arange(n_roots, dtype=np.int64)
    w_r = np.ones(n_roots) if r == 0 else None
    for level in range(1, deep + 1):
        counts, disp = model_mod.sample_brood_batch(model, pos.size, rng)
        total = int(counts.sum())
        if total > pop_cap:
            raise PopulationCapExceeded(
                f"forest level {level} would hold {total} > cap {pop_cap}")
        pos = np.repeat(pos, counts) + disp
        ids = np.repeat(ids, counts)
        if level == r:
            w_r = np.bincount(ids, weights=np.exp(-pos), minlength=n_roots)
    w_deep = np.bincount(ids, weights=np.exp(-pos), minlength=n_roots)
    return w_r, w_deep


def _gw_multinomial_children(pops: np.ndarray, pmf: np.ndarray,
                             rng: np.random.Generator) -> np.ndarray:
    """Total offspring of pops[i] parents each drawing from pmf, per root."""
    # sequential conditional binomials: exact multinomial totals per root
    remaining = pops.astype(np.int64).copy()
    remaining_p = 1.0
    children = np.zeros_like(remaining)
    for k, pk in enumerate(pmf):
        if remaining_p <= 0:
            break
        frac = min(1.0, pk / remaining_p)
        draws = rng.binomial(remaining, frac)
        children += k * draws
        remaining -= draws
        remaining_p -= pk
    return children


def _gw_forest_tail_values(model: OffspringModel, n_roots: int, r: int,
                           deep: int, rng: np.random.Generator, pop_cap: int):
    pmf = np.asarray(model.gw_pmf)
    logm = math.log(model.gw_mean)
    pops = np.ones(n_roots, dtype=np.int64)
    w_r = np.ones(n_roots) if r == 0 else None
    for level in range(1, deep + 1):
        pops = _gw_multinomial_children(pops, pmf, rng)
        if int(pops.sum()) > pop_cap:
            raise PopulationCapExceeded(
                f"forest level {level} exceeds cap {pop_cap}")
        if level == r:
            w_r = pops * math.exp(-level * logm)
    w_deep = pops * math.exp(-deep * logm)
    return w_r, w_deep


def conditional_resample(g: Generation, model: OffspringModel, r: int, R: int,
                         K: int, rng: np.random.Generator,
                         pop_cap: int = DEFAULT_POP_CAP) -> np.ndarray:
    """K conditional draws of the rescaled tail sum of a frozen generation.

    Each draw roots a fresh independent subtree at every individual u of g
    (positions reset to 0, weighted by exp(-S(u))), takes the subtree value
    at depth r+R as the limit proxy, and returns

        sum_u exp(-S(u)) * (W_deep^(u) - W_r^(u)) / m2^((n+r)/2).

    The draws are i.i.d. given g and centered; their exact second moment is
    v2 * m2^(-n) * sum_u exp(-2 S(u)) up to the proxy's m2^R variance
    deficit.
    """
    if g.extinct:
        raise ExtinctTree("cannot resample continuations of an extinct level")
    if r < 0 or R < 1 or K < 1:
        raise ValueError("need r >= 0, R >= 1, K >= 1")
    m2 = laplace_transform(model, 2.0)
    scale = m2 ** ((g.level + r) / 2.0)
    weights = np.exp(-g.positions)
    P = g.size
    deep = r + R
    growth = model_mod.mean_offspring(model) ** deep
    chunk = max(1, min(K, int(2_000_000 / max(1.0, P * growth))))
    out = np.empty(K)
    done = 0
    while done < K:
        kk = min(chunk, K - done)
        w_r, w_deep = _forest_tail_values(model, kk * P, r, deep, rng, pop_cap)
        diff = (w_deep - w_r).reshape(kk, P)
        out[done:done + kk] = csum_rows(diff * weights[None, :])
        done += kk
    return out / scale
