"""Solver configuration and the base class shared by both backends."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..config import InternalConfig, SolverSection
from ..exceptions import BlowUpError, DomainError, StepFailureError
from ..flow.derived import DerivedFields, DerivedSample
from .history import HistoryBuffer

logger = logging.getLogger(__name__)

SOLVER_BACKENDS = ("fractional_direct", "mild_volterra")


@dataclass(frozen=True)
class SolverConfig:
    """Discretization settings for one trajectory.

    Attributes:
        backend: fractional_direct or mild_volterra
        dt: uniform step in scaled time
        tau_end: horizon in scaled time
        picard_tol: relative tolerance of the fixed-point closure at a node
        picard_max_iters: iteration cap of that closure
        faxen: include the Faxen corrections
        max_nodes: refuse grids with more steps than this
    """

    backend: str = "fractional_direct"
    dt: float = 5e-3
    tau_end: float = 1000.0
    picard_tol: float = InternalConfig.picard_tol
    picard_max_iters: int = InternalConfig.picard_max_iters
    faxen: bool = False
    max_nodes: int = InternalConfig.max_nodes

    def validate(self) -> None:
        """Raises DomainError if the settings cannot describe a run."""
        if self.backend not in SOLVER_BACKENDS:
            raise DomainError(f"Unknown solver backend: {self.backend}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.tau_end) and self.tau_end >= self.dt * (1.0 - 1e-12)):
            raise DomainError(f"tau_end must be at least dt, got {self.tau_end!r}")
        if not (self.picard_tol > 0):
            raise DomainError(f"picard_tol must be positive, got {self.picard_tol!r}")
        if self.picard_max_iters < 1:
            raise DomainError(f"picard_max_iters must be at least 1, got {self.picard_max_iters}")
        if self.steps > self.max_nodes:
            raise DomainError(f"{self.steps} steps exceed the configured maximum of {self.max_nodes}")

    @property
    def steps(self) -> int:
        return int(math.floor(self.tau_end / self.dt + 1e-9))

    def tolerance(self, w0_norm: float) -> float:
        """Accuracy the fixed-point closure guarantees for a trajectory started at |w0|."""
        return self.picard_tol * max(1.0, w0_norm)

    @classmethod
    def from_section(cls, section: SolverSection) -> "SolverConfig":
        return cls(
            backend=section.backend,
            dt=section.dt,
            tau_end=section.tau_end,
            picard_tol=section.picard_tol,
            picard_max_iters=section.picard_max_iters,
            faxen=section.faxen,
            max_nodes=section.max_nodes,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class SolverBackend(ABC):
    """Base class for the time integrators.

    A backend fills a HistoryBuffer node by node. Positions always advance
    with the trapezoid rule y_n = y_{n-1} + eps h/2 (g_{n-1} + g_n), where
    g = w + A_u; the closure at node n iterates on y_n until both y_n and
    w_n settle.
    """

    name = "base"

    def __init__(self, fields: DerivedFields, config: SolverConfig):
        self.fields = fields
        self.config = config
        self.params = fields.params
        self.kappa = fields.params.kappa
        self.eps = fields.params.eps
        self.step = config.dt

    @abstractmethod
    def prepare(self, last: int) -> None:
        """Build weight tables for nodes up to ``last``."""
        pass

    @abstractmethod
    def advance(self, buf: HistoryBuffer, n: int, last: int) -> int:
        """Compute node n (and possibly following ones).

        Returns:
            Number of nodes completed
        """
        pass

    def integrate(self, buf: HistoryBuffer, last: int, show_progress: bool = False) -> HistoryBuffer:
        """Fill ``buf`` up to node ``last``.

        Raises:
            StepFailureError: If the closure at a node does not converge
            BlowUpError: If the state becomes non-finite
        """
        if buf.filled < 1:
            raise DomainError("History must contain the initial node")
        self.prepare(last)
        buf.ensure_capacity(last)
        start = buf.filled
        logger.info(f"{self.name}: integrating nodes {start}..{last} (dt={self.step}, kappa={self.kappa:.6g})")
        with tqdm(total=max(last - start + 1, 0), desc=self.name, disable=not show_progress, leave=False) as progress:
            n = start
            while n <= last:
                done = self.advance(buf, n, last)
                progress.update(done)
                n += done
        return buf

    def sample(self, y: np.ndarray, t: float) -> DerivedSample:
        return self.fields.evaluate(y, t, strict=False)

    def close_node(
        self,
        buf: HistoryBuffer,
        n: int,
        solve: Callable[[DerivedSample, np.ndarray], np.ndarray],
        w_guess: Optional[np.ndarray] = None,
    ) -> Tuple[np.ndarray, np.ndarray, DerivedSample]:
        """Fixed-point closure at node n.

        ``solve(sample, w)`` returns the new w_n given the fields at the
        current position iterate and the previous w_n iterate.
        """
        h, eps = self.step, self.eps
        t = buf.time(n)
        tol = self.config.picard_tol
        y_prev, g_prev = buf.y[n - 1], buf.g[n - 1]
        y = y_prev + eps * h * g_prev
        w = buf.w[n - 1] if w_guess is None else w_guess
        for iteration in range(1, self.config.picard_max_iters + 1):
            sample = self.sample(y, t)
            w_new = solve(sample, w)
            y_new = y_prev + 0.5 * eps * h * (g_prev + w_new + sample.A)
            if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(y_new))):
                raise BlowUpError(n)
            dw = np.linalg.norm(w_new - w)
            dy = np.linalg.norm(y_new - y)
            converged = (
                iteration > 1
                and dw <= tol * (1.0 + np.linalg.norm(w_new))
                and dy <= tol * (1.0 + np.linalg.norm(y_new))
            )
            if converged:
                return w_new, y, sample
            w, y = w_new, y_new
        raise StepFailureError(
            n, f"Fixed-point iteration at node {n} did not converge in {self.config.picard_max_iters} sweeps"
        )

    def store(self, buf: HistoryBuffer, n: int, w: np.ndarray, y: np.ndarray, sample: DerivedSample) -> None:
        f = -sample.M @ w + sample.B
        buf.store(n, w, y, f, w + sample.A)
        if buf.exit_node < 0 and not self.fields.inside(y):
            buf.exit_node = n
            logger.warning(
                f"Particle left the flow domain at node {n} (tau={n * self.step:.6g}); "
                "continuing with the analytic extension of the field"
            )
