"""
mrbasset - Inertial particles with Basset memory: kernels, solvers and velocity envelopes.
"""

from .config import ExperimentConfig, InternalConfig
from .envelope import (
    EnvelopeCurve,
    asymptotic_bound,
    check_domination,
    continuation_window,
    convolution_series,
    envelope_curve,
    sup_bound,
)
from .exceptions import (
    BlowUpError,
    CapabilityError,
    ConfigurationError,
    DomainError,
    MRBassetError,
    OracleError,
    OutOfDomainError,
    StepFailureError,
    ValidationError,
)
from .flow import DoubleGyre, FieldBounds, FlowFactory, derived_fields, estimate_bounds
from .params import ParticleParams, PhysicalSetup
from .relaxation import RelaxationKernel, mittag_leffler_half, phi, psi
from .solver import (
    SolverConfig,
    TrajectoryRecord,
    restart_discard_history,
    restart_replay_history,
    simulate,
)

__version__ = "0.1.0"
__all__ = [
    "ExperimentConfig",
    "InternalConfig",
    "ParticleParams",
    "PhysicalSetup",
    "DoubleGyre",
    "FlowFactory",
    "FieldBounds",
    "derived_fields",
    "estimate_bounds",
    "RelaxationKernel",
    "mittag_leffler_half",
    "psi",
    "phi",
    "SolverConfig",
    "TrajectoryRecord",
    "simulate",
    "restart_discard_history",
    "restart_replay_history",
    "EnvelopeCurve",
    "convolution_series",
    "envelope_curve",
    "asymptotic_bound",
    "sup_bound",
    "continuation_window",
    "check_domination",
    "MRBassetError",
    "ValidationError",
    "DomainError",
    "OutOfDomainError",
    "CapabilityError",
    "OracleError",
    "StepFailureError",
    "BlowUpError",
    "ConfigurationError",
]
