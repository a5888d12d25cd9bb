"""Integrators for the relative-velocity equation and restart tools."""

from .base import SOLVER_BACKENDS, SolverBackend, SolverConfig
from .core import (
    BackendFactory,
    ConvergenceReport,
    continue_in_windows,
    convergence_study,
    recover_particle_velocity,
    restart_discard_history,
    restart_replay_history,
    simulate,
)
from .fractional import FractionalDirectBackend
from .history import HistoryBuffer, fractional_weights, kernel_weights
from .mild import MildVolterraBackend
from .record import TrajectoryRecord, load_checkpoint, save_checkpoint

__all__ = [
    "SOLVER_BACKENDS",
    "SolverBackend",
    "SolverConfig",
    "BackendFactory",
    "FractionalDirectBackend",
    "MildVolterraBackend",
    "HistoryBuffer",
    "fractional_weights",
    "kernel_weights",
    "TrajectoryRecord",
    "ConvergenceReport",
    "simulate",
    "recover_particle_velocity",
    "restart_discard_history",
    "restart_replay_history",
    "continue_in_windows",
    "convergence_study",
    "save_checkpoint",
    "load_checkpoint",
]
