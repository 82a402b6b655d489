"""Simulation and statistical verification lab for the Biggins martingale
of supercritical branching random walks."""

from .model import (Atom, ConditionCheck, ConditionReport, MomentSet,
                    OffspringModel, check_conditions, laplace_derivative,
                    laplace_transform, mean_offspring, model_from_config,
                    model_to_config, moment_set, sample_offspring, sigma2)
from .moments import (CovQuery, cov_tail, normalized_tail_cov, ou_cov,
                      var_increment, var_Winf, var_Wr)
from .engine import (Generation, TailEstimate, TrajectoryRecord, advance,
                     ancestor, conditional_resample, default_proxy_depth,
                     martingale, max_weight_ratio, simulate_trajectory,
                     simulate_with_snapshot, tail_estimate)
from .clt import (KsResult, TailSampleMatrix, conditional_normality_test,
                  covariance_test, ks_one_sample, ks_two_sample, log_clt_test,
                  mixture_marginal_test, tail_vector_sample)
from .lil import LilScan, gw_lil_scan, lil_band_report, lil_scan
from .tilt import (AsymptoticsReport, RenewalEstimate, TiltedWalkSpec,
                   asymptotics_check, renewal_V, renewal_lattice_x,
                   tail_integral, tail_lattice_x, tilted_increment,
                   tilted_walk_spec)
from .berry_esseen import (BeReport, TruncatedSummandStats, be_bound,
                           conditional_be_report,
                           conditional_variance_limit_check, truncated_stats)
from .cli import ExperimentReport, RunConfig, parse_config, run, serialize_config
from . import errors

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
