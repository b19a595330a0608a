"""Overloaded cyclic polling systems with multigated service: exact
simulation, embedded branching-process analytics, fluid-limit constants and
statistical verification of the random fluid limit."""

__version__ = "0.1.0"

from .config import ModelConfig, QueueSpec, ValidationReport, load_config, validate_config
from .distributions import (
    INF,
    Deterministic,
    DeterministicGating,
    Exponential,
    GeometricGating,
    LogNormal,
    Pareto,
    PmfGating,
    gating_pgf_at,
    sample_exponential,
    sample_gating,
    sample_service,
    service_mean,
)
from .rng import rng_stream
from .simulator import EventTrace, SessionRecord, run_trace, sample_session_offspring, sample_visit_offspring
from .branching import (
    BranchingData,
    ExtinctionData,
    SessionMeanMatrix,
    SpectralData,
    VisitMeans,
    extinction_probs,
    perron,
    sample_immigration,
    sample_xi,
    sample_zeta,
    session_mean_matrix,
    visit_means,
)
from .fluid import FluidConstants, eval_fluid, eval_fluid_alt, fluid_constants, scaled_limit
from .convergence import (
    BusyMomentReport,
    busy_period_moments,
    extract_xi_empirical,
    ks_two_sample,
    scaled_trajectory_distance,
    switching_ratio_estimates,
)

__all__ = [
    "__version__",
    "ModelConfig", "QueueSpec", "ValidationReport", "load_config", "validate_config",
    "INF", "Deterministic", "Exponential", "LogNormal", "Pareto",
    "DeterministicGating", "GeometricGating", "PmfGating",
    "gating_pgf_at", "sample_service", "sample_gating", "sample_exponential", "service_mean",
    "rng_stream",
    "EventTrace", "SessionRecord", "run_trace", "sample_session_offspring", "sample_visit_offspring",
    "BranchingData", "ExtinctionData", "SessionMeanMatrix", "SpectralData", "VisitMeans",
    "visit_means", "session_mean_matrix", "perron", "sample_immigration",
    "extinction_probs", "sample_zeta", "sample_xi",
    "FluidConstants", "fluid_constants", "eval_fluid", "eval_fluid_alt", "scaled_limit",
    "BusyMomentReport", "busy_period_moments", "ks_two_sample",
    "switching_ratio_estimates", "extract_xi_empirical", "scaled_trajectory_distance",
]
