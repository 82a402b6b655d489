"""Offspring/displacement laws with samplers and closed-form analytics.

Four kinds are supported:

* ``GaltonWatsonEmbedding`` -- a Galton-Watson offspring law where every
  child is displaced by exactly ``log m``; the weighted generation sums then
  coincide with the classical normalized population martingale.
* ``BinaryGaussian`` -- exactly two children, i.i.d. Gaussian displacements
  with variance ``tau2``; the mean is forced by the unit-mean normalization.
* ``PoissonGaussian`` -- Poisson offspring count, Gaussian displacements,
  mean again forced by normalization.
* ``Tabulated`` -- a finite list of (probability, count, displacements)
  atoms, evaluated by exact summation.

All transforms are normalized so that ``laplace_transform(model, 1) == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfiniteVariance

GALTON_WATSON = "GaltonWatsonEmbedding"
BINARY_GAUSSIAN = "BinaryGaussian"
POISSON_GAUSSIAN = "PoissonGaussian"
TABULATED = "Tabulated"

KINDS = (GALTON_WATSON, BINARY_GAUSSIAN, POISSON_GAUSSIAN, TABULATED)

_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Atom:
    """One outcome of a tabulated brood: probability, count, displacements."""

    prob: float
    count: int
    displacements: tuple[float, ...]

    def __post_init__(self):
        if self.prob < 0:
            raise DomainError("atom probability must be non-negative")
        if self.count != len(self.displacements):
            raise DomainError("atom count must match its displacement vector")


@dataclass(frozen=True)
class OffspringModel:
    """Immutable offspring/displacement law.

    Use the class methods (:meth:`galton_watson`, :meth:`binary_gaussian`,
    :meth:`poisson_gaussian`, :meth:`tabulated`) rather than the raw
    constructor; they enforce normalization and supercriticality.
    """

    kind: str
    gw_pmf: tuple[float, ...] | None = None
    tau2: float | None = None
    poisson_rate: float | None = None
    atoms: tuple[Atom, ...] | None = None
    arithmetic_span: float | None = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def galton_watson(cls, pmf) -> "OffspringModel":
        """Offspring pmf ``(p_0, p_1, ..., p_K)`` with mean > 1.

        Every child is displaced by exactly ``log(mean)``, which makes the
        associated walk arithmetic with span ``log(mean) / 2``.
        """
        p = tuple(float(x) for x in pmf)
        if len(p) < 2 or any(x < 0 for x in p):
            raise DomainError("pmf must be non-negative with at least two entries")
        if abs(math.fsum(p) - 1.0) > _NORMALIZATION_TOL:
            raise DomainError("pmf must sum to 1")
        m = math.fsum(k * pk for k, pk in enumerate(p))
        if m <= 1.0:
            raise DomainError("offspring mean must exceed 1 (supercritical)")
        return cls(kind=GALTON_WATSON, gw_pmf=p,
                   arithmetic_span=0.5 * math.log(m))

    @classmethod
    def binary_gaussian(cls, tau2: float) -> "OffspringModel":
        if tau2 <= 0:
            raise DomainError("tau2 must be positive")
        return cls(kind=BINARY_GAUSSIAN, tau2=float(tau2))

    @classmethod
    def poisson_gaussian(cls, rate: float, tau2: float) -> "OffspringModel":
        if rate <= 1.0:
            raise DomainError("Poisson rate must exceed 1 (supercritical)")
        if tau2 <= 0:
            raise DomainError("tau2 must be positive")
        return cls(kind=POISSON_GAUSSIAN, poisson_rate=float(rate),
                   tau2=float(tau2))

    @classmethod
    def tabulated(cls, atoms, arithmetic_span: float | None = None,
                  strict: bool = True) -> "OffspringModel":
        """Finite atom list.  ``strict=False`` skips the normalization and
        supercriticality checks (degenerate fixtures only)."""
        ats = tuple(a if isinstance(a, Atom) else Atom(float(a[0]), int(a[1]),
                                                       tuple(float(x) for x in a[2]))
                    for a in atoms)
        if not ats:
            raise DomainError("need at least one atom")
        if abs(math.fsum(a.prob for a in ats) - 1.0) > _NORMALIZATION_TOL:
            raise DomainError("atom probabilities must sum to 1")
        model = cls(kind=TABULATED, atoms=ats, arithmetic_span=arithmetic_span)
        if strict:
            m1 = laplace_transform(model, 1.0)
            if abs(m1 - 1.0) > _NORMALIZATION_TOL:
                raise DomainError(f"atoms are not normalized: m(1) = {m1!r}")
            if mean_offspring(model) <= 1.0:
                raise DomainError("mean offspring count must exceed 1")
        return model

    # -- derived scalars ---------------------------------------------------

    @property
    def gw_mean(self) -> float:
        return math.fsum(k * pk for k, pk in enumerate(self.gw_pmf))

    @property
    def gaussian_mu(self) -> float:
        """Displacement mean forced by the unit-mean normalization."""
        if self.kind == BINARY_GAUSSIAN:
            return math.log(2.0) + self.tau2 / 2.0
        if self.kind == POISSON_GAUSSIAN:
            return math.log(self.poisson_rate) + self.tau2 / 2.0
        raise DomainError(f"{self.kind} has no Gaussian displacement")


def mean_offspring(model: OffspringModel) -> float:
    """Expected brood size E J."""
    if model.kind == GALTON_WATSON:
        return model.gw_mean
    if model.kind == BINARY_GAUSSIAN:
        return 2.0
    if model.kind == POISSON_GAUSSIAN:
        return model.poisson_rate
    return math.fsum(a.prob * a.count for a in model.atoms)


def laplace_transform(model: OffspringModel, theta: float) -> float:
    """m(theta) = E[sum_i exp(-theta X_i)], +inf outside the domain.

    Closed form for the parametric kinds, exact finite summation for
    tabulated atoms.
    """
    th = float(theta)
    if model.kind == GALTON_WATSON:
        return model.gw_mean ** (1.0 - th)
    if model.kind in (BINARY_GAUSSIAN, POISSON_GAUSSIAN):
        count = 2.0 if model.kind == BINARY_GAUSSIAN else model.poisson_rate
        mu, tau2 = model.gaussian_mu, model.tau2
        return count * math.exp(-th * mu + th * th * tau2 / 2.0)
    total = math.fsum(a.prob * math.fsum(math.exp(-th * x)
                                         for x in a.displacements)
                      for a in model.atoms)
    return total


def laplace_derivative(model: OffspringModel, theta: float) -> float:
    """m'(theta); closed form for parametric kinds, Richardson-refined
    central differences for tabulated atoms."""
    th = float(theta)
    m_th = laplace_transform(model, th)
    if not math.isfinite(m_th):
        raise DomainError(f"m({theta}) is not finite")
    if model.kind == GALTON_WATSON:
        return -math.log(model.gw_mean) * m_th
    if model.kind in (BINARY_GAUSSIAN, POISSON_GAUSSIAN):
        return m_th * (th * model.tau2 - model.gaussian_mu)
    h = 1e-4
    d_h = (laplace_transform(model, th + h) - laplace_transform(model, th - h)) / (2 * h)
    d_h2 = (laplace_transform(model, th + h / 2) - laplace_transform(model, th - h / 2)) / h
    return (4.0 * d_h2 - d_h) / 3.0


def sigma2(model: OffspringModel) -> float:
    """Variance of the first-generation weighted sum W_1 = sum_i exp(-X_i)."""
    m2 = laplace_transform(model, 2.0)
    if not math.isfinite(m2):
        raise InfiniteVariance("second transform diverges")
    if model.kind == GALTON_WATSON:
        m = model.gw_mean
        s2 = math.fsum(k * k * pk for k, pk in enumerate(model.gw_pmf)) - m * m
        return s2 / (m * m)
    if model.kind == BINARY_GAUSSIAN:
        # E W_1^2 = m(2) + 2 (E e^{-X})^2 = m(2) + 1/2 for two i.i.d. children
        return m2 - 0.5
    if model.kind == POISSON_GAUSSIAN:
        # compound Poisson: Var = rate * E[(e^{-X})^2]
        return m2
    # exact over atoms: W_1 takes the value sum_j exp(-x_j) with prob p
    ew = math.fsum(a.prob * math.fsum(math.exp(-x) for x in a.displacements)
                   for a in model.atoms)
    ew2 = math.fsum(a.prob * math.fsum(math.exp(-x) for x in a.displacements) ** 2
                    for a in model.atoms)
    return ew2 - ew * ew


def _second_weight_square_moment(model: OffspringModel) -> float:
    """E[W_1(2)^2] with W_1(2) = m(2)^{-1} sum_i exp(-2 X_i), closed form."""
    m2 = laplace_transform(model, 2.0)
    if model.kind == GALTON_WATSON:
        m = model.gw_mean
        s2 = math.fsum(k * k * pk for k, pk in enumerate(model.gw_pmf)) - m * m
        return (s2 + m * m) / (m * m)  # W_1(2) = J/m
    if model.kind == BINARY_GAUSSIAN:
        mu, tau2 = model.gaussian_mu, model.tau2
        e4 = math.exp(-4 * mu + 8 * tau2)
        return (2 * e4 + m2 * m2 / 2.0) / (m2 * m2)
    if model.kind == POISSON_GAUSSIAN:
        mu, tau2 = model.gaussian_mu, model.tau2
        e4 = math.exp(-4 * mu + 8 * tau2)
        return model.poisson_rate * e4 / (m2 * m2) + 1.0
    return math.fsum(
        a.prob * (math.fsum(math.exp(-2 * x) for x in a.displacements) / m2) ** 2
        for a in model.atoms)


@dataclass(frozen=True)
class MomentSet:
    """Derived second-order constants of a model."""

    m2: float
    m2_prime: float
    sigma2: float
    v2: float
    a: float
    lambda_a: float | None = None
    c_a: float | None = None
    d_a: float | None = None


def moment_set(model: OffspringModel) -> MomentSet:
    """All second-order constants; requires m(2) in (0, 1)."""
    m2 = laplace_transform(model, 2.0)
    if not (0.0 < m2 < 1.0):
        raise DomainError(f"m(2) = {m2!r} is outside (0, 1)")
    m2p = laplace_derivative(model, 2.0)
    s2 = sigma2(model)
    v2 = s2 / (1.0 - m2)
    a = -0.5 * math.log(m2)
    c_inv = -m2p / m2 - a  # equals -m'(2)/m(2) + log(m(2))/2
    c_a = 1.0 / c_inv if c_inv > 0 else None
    lam = model.arithmetic_span
    d_a = None
    if lam is not None and c_a is not None:
        d_a = lam * c_a / (1.0 - math.exp(-lam))
    return MomentSet(m2=m2, m2_prime=m2p, sigma2=s2, v2=v2, a=a,
                     lambda_a=lam, c_a=c_a, d_a=d_a)


# -- sampling ---------------------------------------------------------------

def sample_offspring(model: OffspringModel, rng: np.random.Generator) -> np.ndarray:
    """One brood realization (X_1, ..., X_J); may be empty."""
    counts, disp = sample_brood_batch(model, 1, rng)
    return disp


def sample_brood_batch(model: OffspringModel, n_parents: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized broods for ``n_parents`` independent parents.

    Returns ``(counts, displacements)`` where ``displacements`` is the flat
    concatenation of the per-parent broods in parent order.
    """
    if n_parents == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    if model.kind == GALTON_WATSON:
        cdf = np.cumsum(model.gw_pmf)
        counts = np.searchsorted(cdf, rng.random(n_parents), side="right")
        counts = counts.astype(np.int64)
        total = int(counts.sum())
        return counts, np.full(total, math.log(model.gw_mean))
    if model.kind == BINARY_GAUSSIAN:
        counts = np.full(n_parents, 2, dtype=np.int64)
        disp = rng.normal(model.gaussian_mu, math.sqrt(model.tau2), 2 * n_parents)
        return counts, disp
    if model.kind == POISSON_GAUSSIAN:
        counts = rng.poisson(model.poisson_rate, n_parents).astype(np.int64)
        total = int(counts.sum())
        disp = rng.normal(model.gaussian_mu, math.sqrt(model.tau2), total)
        return counts, disp
    # tabulated: choose an atom per parent, scatter its displacement vector
    probs = np.array([a.prob for a in model.atoms])
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, rng.random(n_parents), side="right")
    idx = np.minimum(idx, len(model.atoms) - 1)
    atom_counts = np.array([a.count for a in model.atoms], dtype=np.int64)
    counts = atom_counts[idx]
    total = int(counts.sum())
    out = np.empty(total)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    for a_i, atom in enumerate(model.atoms):
        if atom.count == 0:
            continue
        sel = np.nonzero(idx == a_i)[0]
        if sel.size == 0:
            continue
        pos = (starts[sel][:, None] + np.arange(atom.count)[None, :]).ravel()
        out[pos] = np.tile(np.asarray(atom.displacements), sel.size)
    return counts, out


# -- hypothesis checking -----------------------------------------------------

@dataclass(frozen=True)
class ConditionCheck:
    key: str
    description: str
    passed: bool | None  # None means UNKNOWN / inconclusive
    margin: tuple[float, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class ConditionReport:
    checks: tuple[ConditionCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, key: str) -> ConditionCheck:
        for c in self.checks:
            if c.key == key:
                return c
        raise KeyError(key)


def check_conditions(model: OffspringModel) -> ConditionReport:
    """Numeric pass/fail report for all standing hypotheses.

    (i) unit normalization; (ii) m(2) < 1; (iii) finite brood variance;
    (iv) finite W_1(2) log+ W_1(2) moment; (v) theta -> m(theta)^(1/theta)
    decreasing on [1, 2]; (vi) -log m(2)/2 < -m'(2)/m(2).
    """
    checks = []
    m1 = laplace_transform(model, 1.0)
    checks.append(ConditionCheck(
        "i", "m(1) = 1", abs(m1 - 1.0) <= _NORMALIZATION_TOL, (abs(m1 - 1.0),)))

    m2 = laplace_transform(model, 2.0)
    checks.append(ConditionCheck("ii", "m(2) < 1", m2 < 1.0, (m2, 1.0)))

    try:
        s2 = sigma2(model)
        checks.append(ConditionCheck("iii", "Var W_1 finite",
                                     math.isfinite(s2), (s2,)))
    except InfiniteVariance:
        checks.append(ConditionCheck("iii", "Var W_1 finite", False, ()))

    # (iv): exact for tabulated atoms; for parametric kinds bounded by the
    # closed-form second moment since x log+ x <= x^2.
    if math.isfinite(m2) and m2 > 0:
        if model.kind == TABULATED:
            val = math.fsum(
                a.prob * _xlogplus(math.fsum(math.exp(-2 * x)
                                             for x in a.displacements) / m2)
                for a in model.atoms)
        else:
            val = _second_weight_square_moment(model)
        checks.append(ConditionCheck(
            "iv", "E W_1(2) log+ W_1(2) finite", math.isfinite(val), (val,)))
    else:
        checks.append(ConditionCheck(
            "iv", "E W_1(2) log+ W_1(2) finite", False, ()))

    # (v): 101-point grid on [1, 2], strict decrease up to 1e-10 slack
    grid = np.linspace(1.0, 2.0, 101)
    vals = np.array([laplace_transform(model, t) ** (1.0 / t) for t in grid])
    ok_v = bool(np.all(np.diff(vals) < 1e-10)) and bool(np.all(np.isfinite(vals)))
    checks.append(ConditionCheck(
        "v", "m(theta)^(1/theta) decreasing on [1,2]", ok_v,
        (float(np.max(np.diff(vals))),)))

    # (vi): -log m(2)/2 < -m'(2)/m(2)
    if math.isfinite(m2) and 0 < m2:
        lhs = -math.log(m2) / 2.0
        rhs = -laplace_derivative(model, 2.0) / m2
        checks.append(ConditionCheck("vi", "-log m(2)/2 < -m'(2)/m(2)",
                                     lhs < rhs, (lhs, rhs)))
    else:
        checks.append(ConditionCheck("vi", "-log m(2)/2 < -m'(2)/m(2)", False, ()))

    return ConditionReport(tuple(checks))


def _xlogplus(x: float) -> float:
    return x * math.log(x) if x > 1.0 else 0.0


# -- flat config (de)serialization -------------------------------------------

def model_to_config(model: OffspringModel) -> dict[str, str]:
    """Flat key/value section describing the model."""
    out = {"kind": model.kind}
    if model.kind == GALTON_WATSON:
        out["gw_pmf"] = ",".join(f"{k}:{p:.17g}" for k, p in enumerate(model.gw_pmf))
    elif model.kind == BINARY_GAUSSIAN:
        out["tau2"] = f"{model.tau2:.17g}"
    elif model.kind == POISSON_GAUSSIAN:
        out["poisson_rate"] = f"{model.poisson_rate:.17g}"
        out["tau2"] = f"{model.tau2:.17g}"
    else:
        out["atoms"] = ";".join(
            f"{a.prob:.17g}:{a.count}:" + "|".join(f"{x:.17g}" for x in a.displacements)
            for a in model.atoms)
        if model.arithmetic_span is not None:
            out["arithmetic_span"] = f"{model.arithmetic_span:.17g}"
    return out


def model_from_config(section: dict[str, str]) -> OffspringModel:
    """Inverse of :func:`model_to_config`; raises DomainError on bad values."""
    kind = section.get("kind")
    if kind is None:
        raise DomainError("model section needs a 'kind' key")
    known = {"kind", "gw_pmf", "tau2", "poisson_rate", "atoms", "arithmetic_span"}
    unknown = set(section) - known
    if unknown:
        raise DomainError(f"unknown model keys: {sorted(unknown)}")
    if kind == GALTON_WATSON:
        pmf_txt = section["gw_pmf"]
        entries = {}
        for piece in pmf_txt.split(","):
            k_txt, p_txt = piece.split(":")
            entries[int(k_txt)] = float(p_txt)
        pmf = [entries.get(k, 0.0) for k in range(max(entries) + 1)]
        return OffspringModel.galton_watson(pmf)
    if kind == BINARY_GAUSSIAN:
        return OffspringModel.binary_gaussian(float(section["tau2"]))
    if kind == POISSON_GAUSSIAN:
        return OffspringModel.poisson_gaussian(float(section["poisson_rate"]),
                                               float(section["tau2"]))
    if kind == TABULATED:
        atoms = []
        for piece in section["atoms"].split(";"):
            p_txt, c_txt, xs_txt = piece.split(":")
            xs = tuple(float(x) for x in xs_txt.split("|")) if xs_txt else ()
            atoms.append(Atom(float(p_txt), int(c_txt), xs))
        span = section.get("arithmetic_span")
        return OffspringModel.tabulated(
            atoms, arithmetic_span=float(span) if span else None)
    raise DomainError(f"unknown model kind {kind!r}")
