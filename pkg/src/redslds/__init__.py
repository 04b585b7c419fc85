"""Switching linear dynamical systems with recurrent explicit durations.

Four model variants share one code path: plain SLDS, recurrent SLDS,
explicit-duration SLDS and the recurrent explicit-duration model.  Inference
is blocked Gibbs with Polya-gamma augmentation for the stick-breaking
transition and duration links.
"""

from .distributions import (
    DirichletParams,
    InfoGaussian,
    MNIWParams,
    NumericalAbort,
    PGParams,
    info_to_moment,
    mniw_posterior,
    sample_info_gaussian,
    sample_mniw,
    sample_pg,
)
from .model import (
    InitParams,
    LatentTrajectory,
    ModeParams,
    ModelConfig,
    ModelParams,
    joint_log_density,
    simulate,
    transition_kernel,
)

__all__ = [
    "DirichletParams",
    "InfoGaussian",
    "MNIWParams",
    "NumericalAbort",
    "PGParams",
    "info_to_moment",
    "mniw_posterior",
    "sample_info_gaussian",
    "sample_mniw",
    "sample_pg",
    "InitParams",
    "LatentTrajectory",
    "ModeParams",
    "ModelConfig",
    "ModelParams",
    "joint_log_density",
    "simulate",
    "transition_kernel",
]

__version__ = "0.1.0"
