"""Experiment runner: config parsing, orchestration, persistence.

Config files are INI-style with two sections::

    [run]
    experiment = clt-cov
    seed = 42
    M = 20000

    [model]
    kind = GaltonWatsonEmbedding
    gw_pmf = 0:0,1:0.5,2:0.5

Unknown keys are errors.  Per-task seeds are derived from the root seed and
the task index, so statistics are identical for any worker count; reports
carry a content hash of the resolved config (excluding execution-only keys).

Exit codes: 0 all checks passed, 1 statistical failure, 2 configuration
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import io
import json
import math
import multiprocessing
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import berry_esseen as bede
from . import clt, lil, moments, tilt
from .engine import default_proxy_depth, simulate_trajectory, simulate_with_snapshot
from .errors import BigginsError, DomainError, ParseError, ValidationError
from .model import (OffspringModel, check_conditions, model_from_config,
                    model_to_config, moment_set, sigma2)
from .numerics import csum
from .streams import derive, derive_seed

EXPERIMENTS = ("conditions", "moments", "simulate", "clt-cov", "clt-mixture",
               "clt-conditional", "clt-log", "lil", "renewal",
               "tail-integral", "berry-esseen")

_NEEDS_M2_LT_1 = frozenset(EXPERIMENTS) - {"conditions", "simulate"}

_DEFAULT_ALPHA = {"clt-mixture": 0.001, "clt-log": 0.001,
                  "clt-conditional": 0.05, "lil": 0.01}
_DEFAULT_REL_TOL = {"renewal": 0.10, "tail-integral": 0.15}

# fixed acceptance fractions for the per-tree suites
_COND_PASS_FRAC = 0.9
_DOMINANCE_FRAC = 0.99
_RATIO_BAND = (0.8, 1.2)
_RATIO_FRAC = 0.9

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    model: OffspringModel
    seed: int = 0
    workers: int = 1
    out: str | None = None
    n: int = 8
    d: int = 4
    R: int | None = None
    N: int = 20
    M: int = 10000
    K: int = 2000
    trees: int = 20
    r: int = 3
    paths: int = 100000
    n_max: int = 80
    levels: tuple[int, ...] = (4, 8, 12)
    band: tuple[float, float] = (0.2, 2.0)
    x_grid: tuple[float, ...] | None = None
    lattice_indices: tuple[int, ...] | None = None
    pop_cap: int = 50_000_000
    measure: str | None = None
    alpha: float | None = None
    rel_tol: float | None = None
    be_constant: float = bede.DEFAULT_BE_CONSTANT

    def resolved_R(self) -> int:
        if self.R is not None:
            return self.R
        return default_proxy_depth(moment_set(self.model).m2)

    def resolved_measure(self) -> str:
        if self.measure is not None:
            return self.measure
        # the tail integral weights decay along the walk, so the
        # variance-reduced measure is the sensible default there
        return tilt.SECOND_TILT if self.experiment == "tail-integral" \
            else tilt.ASSOCIATED

    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return _DEFAULT_ALPHA.get(self.experiment, 0.05)

    def resolved_rel_tol(self) -> float:
        if self.rel_tol is not None:
            return self.rel_tol
        return _DEFAULT_REL_TOL.get(self.experiment, 0.10)


_INT_KEYS = {"seed", "workers", "n", "d", "R", "N", "M", "K", "trees", "r",
             "paths", "n_max", "pop_cap"}
_FLOAT_KEYS = {"alpha", "rel_tol", "be_constant"}
_RUN_KEYS = (_INT_KEYS | _FLOAT_KEYS
             | {"experiment", "out", "levels", "band", "x_grid",
                "lattice_indices", "measure"})

_POSITIVE_KEYS = {"workers", "d", "N", "M", "K", "trees", "paths", "n_max",
                  "pop_cap"}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config document."""
    cp = configparser.ConfigParser(interpolation=None, strict=True,
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (n and N differ)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from exc
    unknown_sections = set(cp.sections()) - {"run", "model"}
    if unknown_sections:
        raise ValidationError(f"unknown sections: {sorted(unknown_sections)}")
    if not cp.has_section("model"):
        raise ValidationError("missing [model] section")
    try:
        model = model_from_config(dict(cp.items("model")))
    except (DomainError, KeyError, ValueError) as exc:
        raise ValidationError(f"invalid model section: {exc}") from exc

    run_items = dict(cp.items("run")) if cp.has_section("run") else {}
    unknown = set(run_items) - _RUN_KEYS
    if unknown:
        raise ValidationError(f"unknown run keys: {sorted(unknown)}")

    kwargs: dict = {"model": model}
    for key, raw in run_items.items():
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(raw)
            elif key == "levels":
                kwargs[key] = tuple(int(x) for x in raw.split(","))
            elif key == "band":
                lo, hi = (float(x) for x in raw.split(","))
                kwargs[key] = (lo, hi)
            elif key == "x_grid":
                kwargs[key] = tuple(float(x) for x in raw.split(","))
            elif key == "lattice_indices":
                kwargs[key] = tuple(int(x) for x in raw.split(","))
            else:
                kwargs[key] = raw.strip()
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {raw!r}") from exc

    experiment = kwargs.pop("experiment", None)
    if experiment is None:
        raise ValidationError("config must name an experiment")
    cfg = RunConfig(experiment=experiment, **kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    violations = []
    if cfg.experiment not in EXPERIMENTS:
        violations.append(f"unknown experiment {cfg.experiment!r}")
    for key in _POSITIVE_KEYS:
        if getattr(cfg, key) <= 0:
            violations.append(f"{key} must be positive")
    if cfg.n < 0 or cfg.r < 0:
        violations.append("n and r must be non-negative")
    if cfg.R is not None and cfg.R < 1:
        violations.append("R must be >= 1")
    if not (0 <= cfg.seed < 2 ** 64):
        violations.append("seed must fit in 64 bits")
    if cfg.measure not in (None, tilt.ASSOCIATED, tilt.SECOND_TILT):
        violations.append(f"unknown measure {cfg.measure!r}")
    if cfg.band[0] > cfg.band[1]:
        violations.append("band must be (lo, hi) with lo <= hi")
    if cfg.experiment in _NEEDS_M2_LT_1:
        report = check_conditions(cfg.model)
        if not report["ii"].passed:
            violations.append(
                f"experiment {cfg.experiment!r} requires m(2) < 1 but "
                f"check (ii) fails with m(2) = {report['ii'].margin[0]:.6f}")
    if violations:
        raise ValidationError("; ".join(violations))


def serialize_config(cfg: RunConfig, for_hash: bool = False) -> str:
    """Canonical text form; inverse of parse_config.

    ``for_hash`` omits execution-only keys (workers, out) so the content
    hash identifies the experiment, not the schedule.
    """
    buf = io.StringIO()
    buf.write("[run]\n")
    buf.write(f"experiment = {cfg.experiment}\n")
    skip = {"model"} | ({"workers", "out"} if for_hash else set())
    for f in dataclasses.fields(cfg):
        key = f.name
        if key in skip or key == "experiment":
            continue
        val = getattr(cfg, key)
        if val is None:
            continue
        if key in ("levels", "lattice_indices"):
            txt = ",".join(str(int(v)) for v in val)
        elif key in ("band", "x_grid"):
            txt = ",".join(f"{float(v):.17g}" for v in val)
        elif key in _FLOAT_KEYS:
            txt = f"{val:.17g}"
        else:
            txt = str(val)
        buf.write(f"{key} = {txt}\n")
    buf.write("\n[model]\n")
    for key, val in model_to_config(cfg.model).items():
        buf.write(f"{key} = {val}\n")
    return buf.getvalue()


def config_hash(cfg: RunConfig) -> str:
    digest = hashlib.sha256(serialize_config(cfg, for_hash=True).encode())
    return digest.hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    config_hash: str
    config_text: str
    statistics: dict
    passed: bool
    wall_clock_s: float
    raw_files: tuple[str, ...] = ()

    def to_json(self) -> str:
        payload = {
            "schema": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "config": self.config_text,
            "statistics": self.statistics,
            "passed": self.passed,
            "wall_clock_s": round(self.wall_clock_s, 3),
            "raw_files": list(self.raw_files),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


# -- worker helpers (module level for pickling) --------------------------------

def _pool_map(fn, args_list, workers: int):
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    ctx = multiprocessing.get_context()
    with ctx.Pool(min(workers, len(args_list))) as pool:
        return pool.map(fn, args_list)


def _blocks(total: int, workers: int, per_block: int = 2000):
    n_blocks = max(1, min(math.ceil(total / per_block), workers * 8)) \
        if workers > 1 else max(1, math.ceil(total / per_block))
    edges = np.linspace(0, total, n_blocks + 1, dtype=int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])
            if hi > lo]


def _tail_block(args):
    model, n, d, R, seed, lo, hi = args
    return clt.tail_rows(model, n, d, R, seed, lo, hi)


def _traj_block(args):
    model, depth, seed, label, lo, hi, pop_cap = args
    w1_last = np.empty(hi - lo)
    w2_last = np.empty(hi - lo)
    surv = np.empty(hi - lo, dtype=bool)
    for j, i in enumerate(range(lo, hi)):
        rec = simulate_trajectory(model, depth, derive_seed(seed, label, i),
                                  pop_cap=pop_cap)
        w1_last[j] = rec.W1[depth]
        w2_last[j] = rec.W2[depth]
        surv[j] = rec.survived
    return w1_last, w2_last, surv


def _traj_full_block(args):
    model, depth, seed, label, lo, hi, pop_cap = args
    count = hi - lo
    w1 = np.empty((count, depth + 1))
    w2 = np.empty((count, depth + 1))
    pop = np.empty((count, depth + 1), dtype=np.int64)
    sup = np.empty((count, depth + 1))
    for j, i in enumerate(range(lo, hi)):
        rec = simulate_trajectory(model, depth, derive_seed(seed, label, i),
                                  pop_cap=pop_cap)
        w1[j], w2[j], pop[j], sup[j] = rec.W1, rec.W2, rec.pop, rec.sup_weight
    return w1, w2, pop, sup


def _lil_block(args):
    model, v2, m2, N, R, seed, lo, hi, pop_cap = args
    out = []
    for i in range(lo, hi):
        traj = simulate_trajectory(model, N + R, derive_seed(seed, "lil", i),
                                   pop_cap=pop_cap)
        out.append(lil.lil_scan(traj, v2, m2, R))
    return out


def _bede_tree(args):
    model, n, r, K, C, seed, i, pop_cap = args
    ms = moment_set(model)
    deep = n + default_proxy_depth(ms.m2)
    traj, snaps = simulate_with_snapshot(model, deep,
                                         derive_seed(seed, "betree", i), (n,),
                                         pop_cap=pop_cap)
    gen = snaps[n]
    if gen.extinct or not traj.survived:
        return None
    rep = bede.conditional_be_report(gen, model, r, K, C,
                                     derive(seed, "bedraw", i))
    ratio = ms.m2 ** (-n) * rep.var_v / (
        traj.W2[deep] * moments.var_Wr(sigma2(model), ms.m2, r))
    return rep, ratio


# -- experiment implementations -------------------------------------------------

def _run_conditions(cfg: RunConfig):
    report = check_conditions(cfg.model)
    stats = {"checks": [
        {"key": c.key, "description": c.description, "passed": c.passed,
         "margin": list(c.margin)} for c in report.checks]}
    return stats, report.all_passed


def _run_moments(cfg: RunConfig):
    ms = moment_set(cfg.model)
    stats = {"moment_set": dataclasses.asdict(ms)}
    return stats, True


def _run_simulate(cfg: RunConfig):
    depth = cfg.N
    results = _pool_map(_traj_full_block,
                        [(cfg.model, depth, cfg.seed, "sim", lo, hi,
                          cfg.pop_cap)
                         for lo, hi in _blocks(cfg.M, cfg.workers)],
                        cfg.workers)
    w1 = np.concatenate([r[0] for r in results])
    w2 = np.concatenate([r[1] for r in results])
    pop = np.concatenate([r[2] for r in results])
    sup = np.concatenate([r[3] for r in results])
    last1 = w1[:, depth]
    try:
        ms = moment_set(cfg.model)
        exact_var = moments.var_Wr(ms.sigma2, ms.m2, depth)
        se = math.sqrt(exact_var / cfg.M)
        z = (csum(last1) / cfg.M - 1.0) / se
        passed = abs(z) <= 4.0
    except DomainError:
        # models outside m(2) < 1 still simulate; no exact variance check
        exact_var, z, passed = None, None, True
    stats = {"M": cfg.M, "depth": depth,
             "mean_W1": csum(last1) / cfg.M,
             "mean_W2": csum(w2[:, depth]) / cfg.M,
             "exact_var_W1": exact_var, "martingale_z": z,
             "survival_fraction": float(np.mean(pop[:, depth] > 0))}
    return stats, passed, (w1, w2, pop, sup)


def _run_clt_cov(cfg: RunConfig):
    R = cfg.resolved_R()
    results = _pool_map(_tail_block,
                        [(cfg.model, cfg.n, cfg.d, R, cfg.seed, lo, hi)
                         for lo, hi in _blocks(cfg.M, cfg.workers)],
                        cfg.workers)
    ts = clt.TailSampleMatrix(
        n=cfg.n, d=cfg.d, proxy_depth=R,
        values=np.concatenate([r[0] for r in results]),
        w2=np.concatenate([r[1] for r in results]),
        survived=np.concatenate([r[2] for r in results]))
    ms = moment_set(cfg.model)
    rep = clt.covariance_test(ts, ms.v2, ms.m2, seed=cfg.seed)
    stats = {"n": cfg.n, "d": cfg.d, "R": R, "M": cfg.M,
             "empirical": rep.empirical.tolist(),
             "target": rep.target.tolist(), "z": rep.z.tolist(),
             "max_abs_z": float(np.max(np.abs(rep.z)))}
    return stats, rep.passed, ts


def _run_clt_mixture(cfg: RunConfig):
    R = cfg.resolved_R()
    results = _pool_map(_tail_block,
                        [(cfg.model, cfg.n, 1, R, cfg.seed, lo, hi)
                         for lo, hi in _blocks(cfg.M, cfg.workers)],
                        cfg.workers)
    ts = clt.TailSampleMatrix(
        n=cfg.n, d=1, proxy_depth=R,
        values=np.concatenate([r[0] for r in results]),
        w2=np.concatenate([r[1] for r in results]),
        survived=np.concatenate([r[2] for r in results]))
    proxy_seed = derive_seed(cfg.seed, "proxy-block")
    proxies = _pool_map(_traj_block,
                        [(cfg.model, cfg.n + R, proxy_seed, "tree", lo, hi,
                          cfg.pop_cap)
                         for lo, hi in _blocks(cfg.M, cfg.workers)],
                        cfg.workers)
    w2_ind = np.concatenate([r[1] for r in proxies])
    ms = moment_set(cfg.model)
    ks = clt.mixture_marginal_test(ts, w2_ind, ms.v2, cfg.seed)
    alpha = cfg.resolved_alpha()
    stats = {"n": cfg.n, "R": R, "M": cfg.M, "statistic": ks.statistic,
             "p": ks.pvalue, "alpha": alpha,
             "n_surviving": ts.n_surviving}
    return stats, ks.pvalue > alpha


def _run_clt_conditional(cfg: RunConfig):
    R = cfg.resolved_R()
    results = clt.conditional_normality_test(cfg.model, cfg.n, cfg.r, R,
                                             cfg.K, cfg.trees, cfg.seed)
    alpha = cfg.resolved_alpha()
    bonf = alpha / cfg.trees
    n_pass = sum(1 for r in results if r.ks.pvalue >= bonf)
    need = math.ceil(_COND_PASS_FRAC * cfg.trees)
    stats = {"n": cfg.n, "r": cfg.r, "R": R, "K": cfg.K, "trees": cfg.trees,
             "alpha": alpha, "bonferroni_alpha": bonf, "n_pass": n_pass,
             "required": need,
             "per_tree": [{"tree": r.tree_index, "pop": r.population,
                           "cond_var": r.cond_var, "D": r.ks.statistic,
                           "p": r.ks.pvalue} for r in results]}
    return stats, n_pass >= need


def _run_clt_log(cfg: RunConfig):
    R = cfg.resolved_R()
    rep = clt.log_clt_test(cfg.model, cfg.n, R, cfg.M, cfg.seed)
    alpha = cfg.resolved_alpha()
    stats = {"n": cfg.n, "R": R, "M": cfg.M, "statistic": rep.ks.statistic,
             "p": rep.ks.pvalue, "alpha": alpha,
             "excluded_tail": rep.n_excluded_tail,
             "excluded_synth": rep.n_excluded_synth,
             "conditioned_on_survival": rep.conditioned_on_survival}
    return stats, rep.ks.pvalue > alpha


def _run_lil(cfg: RunConfig):
    ms = moment_set(cfg.model)
    R = cfg.resolved_R()
    blocks = _pool_map(_lil_block,
                       [(cfg.model, ms.v2, ms.m2, cfg.N, R, cfg.seed, lo, hi,
                         cfg.pop_cap)
                        for lo, hi in _blocks(cfg.trees, cfg.workers, 50)],
                       cfg.workers)
    scans = [s for b in blocks for s in b]
    rep = lil.lil_band_report(scans, cfg.band)
    alpha = cfg.resolved_alpha()
    passed = (rep.frac_max_in_band >= 0.9 and rep.frac_monotone == 1.0
              and rep.mean_growth >= 0.0
              and rep.symmetry_ks_pvalue >= alpha)
    stats = {"trees": cfg.trees, "N": cfg.N, "R": R, "band": list(cfg.band),
             "n_surviving": rep.n_surviving,
             "frac_max_in_band": rep.frac_max_in_band,
             "frac_min_in_band": rep.frac_min_in_band,
             "frac_monotone": rep.frac_monotone,
             "mean_growth": rep.mean_growth,
             "symmetry_ks_stat": rep.symmetry_ks_stat,
             "symmetry_ks_p": rep.symmetry_ks_pvalue, "alpha": alpha}
    return stats, passed, scans


def _renewal_grid(cfg: RunConfig):
    if cfg.x_grid is not None:
        return np.asarray(cfg.x_grid)
    if cfg.lattice_indices is not None:
        lam = cfg.model.arithmetic_span
        if lam is None:
            raise ValidationError("lattice_indices need an arithmetic model")
        return tilt.renewal_lattice_x(lam, cfg.lattice_indices)
    raise ValidationError("renewal experiments need x_grid or lattice_indices")


def _run_renewal(cfg: RunConfig):
    x = _renewal_grid(cfg)
    est = tilt.renewal_V(cfg.model, x, cfg.n_max, cfg.paths, cfg.seed,
                         measure=cfg.resolved_measure())
    ms = moment_set(cfg.model)
    regime = "arithmetic" if cfg.model.arithmetic_span is not None \
        else "nonarithmetic"
    rep = tilt.asymptotics_check(est, ms, regime)
    tol = cfg.resolved_rel_tol()
    passed = bool(np.max(np.abs(rep.rel_error)) <= tol)
    stats = {"x": est.x.tolist(), "v_hat": est.v_hat.tolist(),
             "stderr": est.stderr.tolist(),
             "last_term": est.last_term.tolist(),
             "truncation_flags": est.truncation_flags.tolist(),
             "n_max": cfg.n_max, "paths": cfg.paths,
             "measure": cfg.resolved_measure(),
             "regime": regime, "constant": rep.constant,
             "ratio": rep.ratio.tolist(),
             "rel_error": rep.rel_error.tolist(), "rel_tol": tol}
    return stats, passed, (est, rep)


def _run_tail_integral(cfg: RunConfig):
    ms = moment_set(cfg.model)
    if cfg.x_grid is not None:
        x = np.asarray(cfg.x_grid)
        target = ms.c_a / x
    else:
        lam = cfg.model.arithmetic_span
        if lam is None:
            raise ValidationError("lattice_indices need an arithmetic model")
        idx = np.asarray(cfg.lattice_indices or ())
        if idx.size == 0:
            raise ValidationError("tail-integral needs x_grid or "
                                  "lattice_indices")
        x = tilt.tail_lattice_x(lam, idx)
        target = ms.d_a * np.exp(-lam * idx)
    est = tilt.tail_integral(cfg.model, x, cfg.n_max, cfg.paths, cfg.seed,
                             measure=cfg.resolved_measure())
    rel = est.value / target - 1.0
    tol = cfg.resolved_rel_tol()
    passed = bool(np.max(np.abs(rel)) <= tol)
    stats = {"x": est.x.tolist(), "value": est.value.tolist(),
             "stderr": est.stderr.tolist(), "target": target.tolist(),
             "rel_error": rel.tolist(), "rel_tol": tol,
             "n_max": cfg.n_max, "paths": cfg.paths,
             "measure": cfg.resolved_measure()}
    return stats, passed


def _run_berry_esseen(cfg: RunConfig):
    args = [(cfg.model, cfg.n, cfg.r, cfg.K, cfg.be_constant, cfg.seed, i,
             cfg.pop_cap) for i in range(cfg.trees)]
    results = [r for r in _pool_map(_bede_tree, args, cfg.workers)
               if r is not None]
    if not results:
        raise DomainError("no surviving trees")
    dominated = [rep.dominated for rep, _ in results]
    ratios = np.array([ratio for _, ratio in results])
    lo, hi = _RATIO_BAND
    ratio_ok = float(np.mean((ratios >= lo) & (ratios <= hi)))
    frac_dom = float(np.mean(dominated))
    stats = {"n": cfg.n, "r": cfg.r, "K": cfg.K, "C": cfg.be_constant,
             "trees_used": len(results),
             "frac_dominated": frac_dom,
             "frac_ratio_in_band": ratio_ok,
             "per_tree": [{"bound": rep.bound, "ks": rep.ks.statistic,
                           "var_ratio": float(ratio)}
                          for rep, ratio in results]}
    passed = frac_dom >= _DOMINANCE_FRAC and ratio_ok >= _RATIO_FRAC
    return stats, passed


def run(cfg: RunConfig) -> ExperimentReport:
    """Dispatch an experiment and assemble its report."""
    start = time.monotonic()
    raw_payload = {}
    if cfg.experiment == "conditions":
        stats, passed = _run_conditions(cfg)
    elif cfg.experiment == "moments":
        stats, passed = _run_moments(cfg)
    elif cfg.experiment == "simulate":
        stats, passed, rows = _run_simulate(cfg)
        raw_payload["trajectories"] = rows
    elif cfg.experiment == "clt-cov":
        stats, passed, ts = _run_clt_cov(cfg)
        raw_payload["tail_matrix"] = ts
    elif cfg.experiment == "clt-mixture":
        stats, passed = _run_clt_mixture(cfg)
    elif cfg.experiment == "clt-conditional":
        stats, passed = _run_clt_conditional(cfg)
    elif cfg.experiment == "clt-log":
        stats, passed = _run_clt_log(cfg)
    elif cfg.experiment == "lil":
        stats, passed, scans = _run_lil(cfg)
        raw_payload["scans"] = scans
    elif cfg.experiment == "renewal":
        stats, passed, est = _run_renewal(cfg)
        raw_payload["renewal"] = est
    elif cfg.experiment == "tail-integral":
        stats, passed = _run_tail_integral(cfg)
    elif cfg.experiment == "berry-esseen":
        stats, passed = _run_berry_esseen(cfg)
    else:
        raise ValidationError(f"unknown experiment {cfg.experiment!r}")

    raw_files = ()
    if cfg.out:
        raw_files = _write_raw(cfg, raw_payload)
    report = ExperimentReport(
        experiment=cfg.experiment,
        config_hash=config_hash(cfg),
        config_text=serialize_config(cfg, for_hash=True),
        statistics=stats,
        passed=bool(passed),
        wall_clock_s=time.monotonic() - start,
        raw_files=raw_files,
    )
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "report.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
    return report


def _write_raw(cfg: RunConfig, payload: dict) -> tuple[str, ...]:
    os.makedirs(cfg.out, exist_ok=True)
    files = []
    tag = config_hash(cfg)
    if "scans" in payload:
        scan_dir = os.path.join(cfg.out, f"scans_{tag}")
        os.makedirs(scan_dir, exist_ok=True)
        for i, scan in enumerate(payload["scans"]):
            path = os.path.join(scan_dir, f"tree_{i:04d}.csv")
            with open(path, "w") as fh:
                fh.write(f"# config {tag}\n")
                fh.write(scan.to_csv())
            files.append(path)
    if "renewal" in payload:
        est, rep = payload["renewal"]
        path = os.path.join(cfg.out, f"renewal_{tag}.csv")
        with open(path, "w") as fh:
            fh.write(f"# config {tag}\n")
            fh.write("x,v_hat,stderr,ratio_to_asymptote,last_term\n")
            for i in range(est.x.size):
                fh.write(f"{est.x[i]:.17g},{est.v_hat[i]:.17g},"
                         f"{est.stderr[i]:.17g},"
                         f"{rep.ratio[i] / rep.constant:.17g},"
                         f"{est.last_term[i]:.17g}\n")
        files.append(path)
    if "tail_matrix" in payload:
        ts = payload["tail_matrix"]
        path = os.path.join(cfg.out, f"tail_matrix_{tag}.csv")
        with open(path, "w") as fh:
            fh.write(f"# config {tag}\n")
            fh.write(",".join(f"r{r}" for r in range(ts.d))
                     + ",w2,survived\n")
            for i in range(ts.n_trees):
                row = ",".join(f"{v:.17g}" for v in ts.values[i])
                fh.write(f"{row},{ts.w2[i]:.17g},{int(ts.survived[i])}\n")
        files.append(path)
    if "trajectories" in payload:
        w1, w2, pop, sup = payload["trajectories"]
        path = os.path.join(cfg.out, f"trajectories_{tag}.csv")
        with open(path, "w") as fh:
            fh.write(f"# config {tag}\n")
            fh.write("tree,n,W1,W2,pop,sup_weight\n")
            for t in range(w1.shape[0]):
                for n in range(w1.shape[1]):
                    fh.write(f"{t},{n},{w1[t, n]:.17g},{w2[t, n]:.17g},"
                             f"{int(pop[t, n])},{sup[t, n]:.17g}\n")
        files.append(path)
    return tuple(files)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="biggins",
        description="Branching random walk martingale experiment runner")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        cfg = parse_config(text)
        overrides: dict = {"experiment": args.experiment}
        seed_env = os.environ.get("BIGGINS_SEED")
        workers_env = os.environ.get("BIGGINS_WORKERS")
        if seed_env is not None:
            overrides["seed"] = int(seed_env)
        if workers_env is not None:
            overrides["workers"] = int(workers_env)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.out is not None:
            overrides["out"] = args.out
        cfg = dataclasses.replace(cfg, **overrides)
        _validate(cfg)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        report = run(cfg)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BigginsError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(report.to_json())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
