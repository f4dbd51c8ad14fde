"""Posterior sampling for models whose normalizing constant is intractable.

A Wang-Landau chain over a fixed set of parameter particles learns the log
normalizing constants up to a shared constant; a kernel-smoothed surface
interpolates them; an adaptive Metropolis chain samples the parameter
posterior against that surface.  Ships with Ising, noisy-image segmentation,
and ERGM models plus brute-force references for small instances.
"""

from .config import RunConfig, apply_overrides, parse_config
from .diagnostics import ChainSummary, acf, summarize
from .model import EnergyModel, energy_dot, log_prior
from .oracle import (
    EnumerableInstance,
    ExactSurface,
    exact_posterior,
    fd_gradient_error,
)
from .runner import (
    Experiment,
    RunResult,
    build_experiment,
    make_streams,
    run_experiment,
    run_surface,
)
from .thetachain import (
    AdaptState,
    GaussianBlockProposal,
    ReflectedUniformProposal,
    ThetaChain,
    mh_log_acceptance,
    reflect_into_box,
)
from .validate import validate_suite
from .wl import (
    ParticleSet,
    StepSchedule,
    WlChain,
    flat_histogram_test,
    label_distribution,
    next_gamma,
    rao_blackwell_update,
)
from .zsurface import (
    SampleStore,
    SmoothingKernel,
    ZEstimate,
    kappa_log_weights,
    kappa_weights,
    nearest_neighbor_bandwidth,
)

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "apply_overrides",
    "parse_config",
    "ChainSummary",
    "acf",
    "summarize",
    "EnergyModel",
    "energy_dot",
    "log_prior",
    "EnumerableInstance",
    "ExactSurface",
    "exact_posterior",
    "fd_gradient_error",
    "Experiment",
    "RunResult",
    "build_experiment",
    "make_streams",
    "run_experiment",
    "run_surface",
    "AdaptState",
    "GaussianBlockProposal",
    "ReflectedUniformProposal",
    "ThetaChain",
    "mh_log_acceptance",
    "reflect_into_box",
    "validate_suite",
    "ParticleSet",
    "StepSchedule",
    "WlChain",
    "flat_histogram_test",
    "label_distribution",
    "next_gamma",
    "rao_blackwell_update",
    "SampleStore",
    "SmoothingKernel",
    "ZEstimate",
    "kappa_log_weights",
    "kappa_weights",
    "nearest_neighbor_bandwidth",
    "__version__",
]
