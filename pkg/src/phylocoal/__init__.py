"""Nonparametric Bayesian inference of effective population size
trajectories from timed genealogies, with five MCMC samplers and
ESS-based efficiency diagnostics."""

from .genealogy import Genealogy, IntervalRecord, interval_decomposition, parse_newick, validate
from .gmrf import PrecisionOperator, PriorConfig, build_precision
from .gridlik import Grid, SuffStats, build_grid, exact_log_likelihood_pc, log_likelihood, score, sufficient_stats
from .samplers import CoalescentTarget, SamplerConfig, Trace, run_chain
from .simulate import Trajectory, simulate_genealogy

__version__ = "0.1.0"

__all__ = [
    "Genealogy",
    "IntervalRecord",
    "interval_decomposition",
    "parse_newick",
    "validate",
    "PrecisionOperator",
    "PriorConfig",
    "build_precision",
    "Grid",
    "SuffStats",
    "build_grid",
    "sufficient_stats",
    "log_likelihood",
    "score",
    "exact_log_likelihood_pc",
    "CoalescentTarget",
    "SamplerConfig",
    "Trace",
    "run_chain",
    "Trajectory",
    "simulate_genealogy",
    "__version__",
]
