"""Copula-aided port imputation for fluid-antenna multiple access.

Simulates multiuser fluid-antenna snapshots, learns a two-stage model
(per-coordinate marginal flows plus a masked attentional copula) over the
port-major coordinates, imputes unobserved ports, and evaluates
imputation accuracy and port-selection sum rate against an exact
Gaussian-mixture oracle.
"""

__version__ = "0.1.0"

from .channel import FiniteScattering, RichScattering, Snapshot
from .copula import AttentionalCopula, CopulaHyperParams, posterior_mean, sample_posterior
from .encoding import Mask, decode, encode, equally_spaced_ports
from .geometry import FasGeometry, build_geometry
from .impute import LearnedImputer, ZeroImputer, oracle_imputer_for
from .marginal import MarginalFlowBank, train_marginals
from .oracle import OracleImputer
from .simulate import SnapshotSimulator, make_channel_model
from .sweep import ExperimentConfig, SweepResult, run_sweep

__all__ = [
    "AttentionalCopula",
    "CopulaHyperParams",
    "ExperimentConfig",
    "FasGeometry",
    "FiniteScattering",
    "LearnedImputer",
    "MarginalFlowBank",
    "Mask",
    "OracleImputer",
    "RichScattering",
    "Snapshot",
    "SnapshotSimulator",
    "SweepResult",
    "ZeroImputer",
    "build_geometry",
    "decode",
    "encode",
    "equally_spaced_ports",
    "make_channel_model",
    "oracle_imputer_for",
    "posterior_mean",
    "run_sweep",
    "sample_posterior",
    "train_marginals",
]
