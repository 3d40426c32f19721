"""One-sided device-independent randomness certification for Gaussian optics.

The package builds binned-homodyne measurement models for Gaussian states,
solves the steering guessing-probability semidefinite programs, and turns the
solutions into min-entropy bounds and portable dual certificates.
"""

from .gaussian import (
    ChannelParams,
    GaussianState,
    apply_loss_noise,
    db_to_parameter,
    largest_variance,
    split_sms_covariance,
    tms_covariance,
)
from .fock import FockOperator, gaussian_to_fock, truncation_overlap
from .povm import (
    AccuracyError,
    IntervalBinning,
    MeasurementSet,
    PeriodicBinning,
    alice_measurements,
    bob_measurements,
)
from .stats import (
    Assemblage,
    JointDistribution,
    MissingSettingPair,
    assemblage_from_state,
    assemblage_to_joint,
    empirical_distribution,
    read_samples_csv,
    sample_records,
    signalling_report,
    write_samples_csv,
)
from .sdp import NumericalFailure, SdpError, SdpProblem, SdpSolution, solve
from .certify import (
    BinningProfile,
    CertificationResult,
    DualCertificate,
    optimize_binning,
    pguess_probabilities,
    pguess_tomography,
)
from .experiment import (
    TemporalModeParams,
    experiment_covariance,
    experiment_report,
    squeezing_levels_db,
    temporal_mode_variances,
)
from .config import ConfigError, RunConfig

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "Assemblage",
    "BinningProfile",
    "CertificationResult",
    "ChannelParams",
    "ConfigError",
    "DualCertificate",
    "FockOperator",
    "GaussianState",
    "IntervalBinning",
    "JointDistribution",
    "MeasurementSet",
    "MissingSettingPair",
    "NumericalFailure",
    "PeriodicBinning",
    "RunConfig",
    "SdpError",
    "SdpProblem",
    "SdpSolution",
    "TemporalModeParams",
    "alice_measurements",
    "apply_loss_noise",
    "assemblage_from_state",
    "assemblage_to_joint",
    "bob_measurements",
    "db_to_parameter",
    "empirical_distribution",
    "experiment_covariance",
    "experiment_report",
    "gaussian_to_fock",
    "largest_variance",
    "optimize_binning",
    "pguess_probabilities",
    "pguess_tomography",
    "read_samples_csv",
    "sample_records",
    "signalling_report",
    "solve",
    "split_sms_covariance",
    "squeezing_levels_db",
    "temporal_mode_variances",
    "tms_covariance",
    "truncation_overlap",
    "write_samples_csv",
]
