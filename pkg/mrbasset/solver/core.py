"""Trajectory simulation, restarts and refinement studies."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import DomainError
from ..flow.bounds import FieldBounds
from ..flow.derived import DerivedFields, derived_fields, uniform_forcing
from ..params import ParticleParams
from ..relaxation import RelaxationKernel
from .base import SOLVER_BACKENDS, SolverBackend, SolverConfig
from .fractional import FractionalDirectBackend
from .history import HistoryBuffer
from .mild import MildVolterraBackend
from .record import TrajectoryRecord

logger = logging.getLogger(__name__)


class BackendFactory:
    """Factory for creating solver backends by name."""

    @staticmethod
    def create_backend(name: str, fields: DerivedFields, config: SolverConfig) -> SolverBackend:
        """Create a backend.

        Args:
            name: fractional_direct or mild_volterra
            fields: derived fields of the run
            config: solver settings

        Returns:
            SolverBackend instance

        Raises:
            DomainError: If the name is unknown
        """
        key = name.lower()
        if key == "fractional_direct":
            return FractionalDirectBackend(fields, config)
        elif key == "mild_volterra":
            return MildVolterraBackend(fields, config)
        else:
            raise DomainError(f"Unsupported solver backend: {name}")

    @staticmethod
    def get_available_backends() -> List[str]:
        return list(SOLVER_BACKENDS)


def _start_history(
    fields: DerivedFields, y0: np.ndarray, w0: np.ndarray, t0: float, step: float, last: int
) -> HistoryBuffer:
    buf = HistoryBuffer.allocate(step, last, len(w0), t0, fields.params.eps)
    sample = fields.evaluate(y0, t0, strict=False)
    f0 = -sample.M @ w0 + sample.B
    buf.store(0, w0, y0, f0, w0 + sample.A)
    if not fields.inside(y0):
        buf.exit_node = 0
        logger.warning(f"Release point {tuple(y0)} lies outside the flow domain")
    return buf


def simulate(
    fields: DerivedFields,
    params: ParticleParams,
    y0,
    w0,
    config: SolverConfig,
    t0: float = 0.0,
    bounds: Optional[FieldBounds] = None,
    show_progress: bool = False,
) -> TrajectoryRecord:
    """Integrate one particle from (y0, w0) released at flow time t0.

    Args:
        fields: derived fields (rebuilt for ``params`` and ``config.faxen``)
        params: particle parameters
        y0: release position
        w0: initial relative velocity
        config: solver settings
        t0: flow time of the release
        bounds: bound constants, used only to warn when eps L_M >= 1
        show_progress: tqdm progress over nodes

    Returns:
        TrajectoryRecord on the grid 0, dt, ..., tau_end

    Raises:
        DomainError: If the settings or initial data are invalid
        StepFailureError: If the closure at a node does not converge
        BlowUpError: If the state becomes non-finite
    """
    config.validate()
    y0 = np.asarray(y0, dtype=float).copy()
    w0 = np.asarray(w0, dtype=float).copy()
    if y0.shape != (fields.dimension,) or w0.shape != (fields.dimension,):
        raise DomainError(f"y0 and w0 must be {fields.dimension}-vectors, got shapes {y0.shape} and {w0.shape}")
    if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(w0)) and math.isfinite(t0)):
        raise DomainError("Initial data must be finite")
    fields = derived_fields(fields.field, params, faxen=config.faxen)
    if bounds is not None and params.eps * bounds.L_M >= 1.0:
        logger.warning(f"eps * L_M = {params.eps * bounds.L_M:.4g} >= 1; the envelope bounds do not apply")

    last = config.steps
    backend = BackendFactory.create_backend(config.backend, fields, config)
    buf = _start_history(fields, y0, w0, t0, config.dt, last)
    backend.integrate(buf, last, show_progress=show_progress)
    return TrajectoryRecord.from_history(buf, fields, config)


def recover_particle_velocity_from(fields: DerivedFields, y: np.ndarray, w: np.ndarray, t: np.ndarray) -> np.ndarray:
    """v = w + A_u(y, t) = w + u + (gamma / (6 mu)) lap u along a path."""
    sample = fields.evaluate(np.asarray(y), np.asarray(t), strict=False)
    return np.asarray(w) + sample.A


def recover_particle_velocity(record: TrajectoryRecord) -> np.ndarray:
    """Particle velocity along a recorded path (Faxen term only when enabled)."""
    return recover_particle_velocity_from(record.fields, record.y, record.w, record.t_phys)


def _restart_config(record: TrajectoryRecord, config: Optional[SolverConfig]) -> SolverConfig:
    config = config or record.config
    if config.faxen != record.fields.faxen:
        raise DomainError("A restart cannot switch the Faxen corrections")
    return config


def restart_discard_history(
    record: TrajectoryRecord, tau1: float, config: Optional[SolverConfig] = None
) -> TrajectoryRecord:
    """Restart at tau1 from (y(tau1), w(tau1)) with an empty history.

    The new run starts its memory at tau1 and ends at ``config.tau_end``
    (absolute scaled time; the record's end by default).

    Raises:
        DomainError: If tau1 is not an interior node of the record
    """
    k = record.node_index(tau1)
    if not (record.tau[0] < tau1 < record.tau_end):
        raise DomainError(f"tau1={tau1} must lie strictly inside ({record.tau[0]}, {record.tau_end})")
    config = _restart_config(record, config)
    end = config.tau_end
    local = replace(config, tau_end=end - tau1)
    logger.info(f"Restart at tau={tau1} without history (memory origin moves from {record.origin})")
    fresh = simulate(
        record.fields,
        record.params,
        record.y[k],
        record.w[k],
        local,
        t0=record.t0 + record.params.eps * tau1,
    )
    return TrajectoryRecord.from_history(fresh.history, fresh.fields, replace(fresh.config, tau_end=end), origin=tau1)


def restart_replay_history(
    record: TrajectoryRecord, tau1: float, config: Optional[SolverConfig] = None, show_progress: bool = False
) -> TrajectoryRecord:
    """Continue from tau1 keeping the stored history up to tau1.

    Nodes after tau1 are recomputed; the result matches the uninterrupted
    run up to the closure tolerance and may extend past the record's end.

    Raises:
        DomainError: If tau1 is not a node of the record or the step differs
    """
    k = record.node_index(tau1)
    config = _restart_config(record, config)
    if not math.isclose(config.dt, record.step, rel_tol=1e-12):
        raise DomainError(f"Replay needs the record's step {record.step}, got {config.dt}")
    end = config.tau_end
    last = int(math.floor((end - record.origin) / record.step + 1e-9))
    if last < k:
        raise DomainError(f"Horizon {end} lies before tau1={tau1}")
    history = record.history.truncated(k)
    if last > k:
        backend = BackendFactory.create_backend(config.backend, record.fields, config)
        backend.integrate(history, last, show_progress=show_progress)
    total = replace(config, tau_end=last * record.step + record.origin)
    return TrajectoryRecord.from_history(history, record.fields, total, origin=record.origin)


def continue_in_windows(record: TrajectoryRecord, window: float, tau_end: float) -> TrajectoryRecord:
    """Extend a record to tau_end by chained replay restarts of length ``window``.

    The window is rounded down to whole steps (at least one).
    """
    if not (math.isfinite(window) and window > 0):
        raise DomainError(f"Window must be positive, got {window!r}")
    steps = max(1, int(math.floor(window / record.step + 1e-9)))
    final = int(math.floor((tau_end - record.origin) / record.step + 1e-9))
    current = record
    count = 0
    while len(current) - 1 < final:
        target = min(len(current) - 1 + steps, final)
        current = restart_replay_history(
            current, current.tau_end, replace(current.config, tau_end=record.origin + target * record.step)
        )
        count += 1
    logger.info(f"Continued to tau={current.tau_end} in {count} windows of {steps} steps")
    return current


@dataclass
class ConvergenceReport:
    """Errors and observed orders of a step-refinement study."""

    dts: List[float]
    reference: str
    errors: Dict[str, List[float]] = field(default_factory=dict)
    orders: Dict[str, List[float]] = field(default_factory=dict)
    inconclusive: Dict[str, bool] = field(default_factory=dict)

    def observed_order(self, backend: str) -> float:
        """Order measured between the two finest steps."""
        orders = self.orders.get(backend, [])
        return orders[-1] if orders else math.nan

    def to_dict(self) -> Dict[str, object]:
        return {
            "dts": self.dts,
            "reference": self.reference,
            "errors": self.errors,
            "orders": self.orders,
            "inconclusive": self.inconclusive,
        }


def _closed_form_reference(fields: DerivedFields, w0: np.ndarray, tau: np.ndarray) -> Optional[np.ndarray]:
    B = uniform_forcing(fields)
    if B is None:
        return None
    kernel = RelaxationKernel(fields.params.kappa)
    psi = np.atleast_1d(kernel.psi(tau))[:, None]
    phi = np.atleast_1d(kernel.phi(tau))[:, None]
    return psi * w0 + fields.params.eps * (1.0 - phi) * B


def convergence_study(
    fields: DerivedFields,
    params: ParticleParams,
    y0,
    w0,
    dt_list: Sequence[float],
    tau_end: float = 20.0,
    backends: Sequence[str] = SOLVER_BACKENDS,
    config: Optional[SolverConfig] = None,
) -> ConvergenceReport:
    """Observed convergence orders under step refinement.

    Uniform fields with M_u = 0 are compared with the closed form
    psi w0 + eps B (1 - phi); otherwise the finest step is the reference.
    Errors are sup norms over the nodes of the coarsest grid. A sequence
    whose errors do not decrease strictly is flagged inconclusive.

    Raises:
        DomainError: If fewer than three steps are given or they are not geometric
    """
    dts = [float(dt) for dt in dt_list]
    if len(dts) < 3:
        raise DomainError("A convergence study needs at least three steps")
    ratios = [dts[i] / dts[i + 1] for i in range(len(dts) - 1)]
    if any(r <= 1.0 for r in ratios) or max(ratios) - min(ratios) > 1e-9 * max(ratios):
        raise DomainError(f"Steps must decrease geometrically, got {dts}")
    strides = [int(round(dts[0] / dt)) for dt in dts]
    if any(abs(s * dt - dts[0]) > 1e-9 * dts[0] for s, dt in zip(strides, dts)):
        raise DomainError("Every step must divide the coarsest step")

    base = config or SolverConfig()
    w0 = np.asarray(w0, dtype=float)
    fields = derived_fields(fields.field, params, faxen=base.faxen)
    coarse_tau = None
    exact = None
    report = None
    for backend in backends:
        runs = []
        for dt, stride in zip(dts, strides):
            run = simulate(fields, params, y0, w0, replace(base, backend=backend, dt=dt, tau_end=tau_end))
            runs.append(run.w[::stride])
            if coarse_tau is None:
                coarse_tau = run.tau[::stride]
                exact = _closed_form_reference(fields, w0, coarse_tau)
                report = ConvergenceReport(dts=dts, reference="closed_form" if exact is not None else "finest_grid")
        n = min(len(r) for r in runs)
        if exact is not None:
            errors = [float(np.max(np.linalg.norm(r[:n] - exact[:n], axis=1))) for r in runs]
        else:
            errors = [float(np.max(np.linalg.norm(r[:n] - runs[-1][:n], axis=1))) for r in runs[:-1]]
        orders = []
        for e1, e2, ratio in zip(errors[:-1], errors[1:], ratios):
            orders.append(math.log(e1 / e2) / math.log(ratio) if e1 > 0 and e2 > 0 else math.nan)
        inconclusive = any(not (e1 > e2 > 0) for e1, e2 in zip(errors[:-1], errors[1:]))
        if inconclusive:
            logger.warning(f"Convergence study for {backend} is inconclusive: errors {errors}")
        report.errors[backend] = errors
        report.orders[backend] = orders
        report.inconclusive[backend] = inconclusive
        logger.info(f"{backend}: errors {errors}, observed orders {orders}")
    return report
