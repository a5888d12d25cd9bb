"""Base class for analytic velocity fields."""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..config import InternalConfig
from ..exceptions import DomainError, OutOfDomainError


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box [lower_i, upper_i]."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise DomainError("Box bounds have different dimensions")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise DomainError(f"Degenerate box {self.lower} x {self.upper}")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def contains(self, x: np.ndarray, slack: float = InternalConfig.domain_slack) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lower = np.asarray(self.lower) - slack
        upper = np.asarray(self.upper) + slack
        return np.all((x >= lower) & (x <= upper), axis=-1)


@dataclass
class FlowSample:
    """Velocity and derivative blocks at a batch of points.

    Shapes use ``...`` for the batch: u, DuDt, lap_u and DlapuDt are
    (..., n); grad_u and grad_lap_u are (..., n, n) with
    grad_u[..., i, k] = d u_i / d x_k. The third-order blocks are None when
    only first-order information was requested.
    """

    u: np.ndarray
    grad_u: np.ndarray
    DuDt: np.ndarray
    lap_u: Optional[np.ndarray] = None
    grad_lap_u: Optional[np.ndarray] = None
    DlapuDt: Optional[np.ndarray] = None


class FlowField(ABC):
    """Base class for all velocity fields.

    Subclasses provide closed-form derivatives; evaluation must be pure so
    that fields can be shared between threads and pickled into worker
    processes.
    """

    #: highest spatial derivative order of u available (1 or 3)
    max_derivative_order: int = 1

    #: True when M_u and B_u are constant in space and time
    uniform_forcing: bool = False

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Spatial dimension n."""
        pass

    @property
    def domain(self) -> Optional[Domain]:
        """Bounding box, or None for fields defined everywhere."""
        return None

    @property
    def period(self) -> Optional[float]:
        """Temporal period, or None when aperiodic."""
        return None

    @abstractmethod
    def _evaluate(self, x: np.ndarray, t: np.ndarray, order: int) -> FlowSample:
        """Evaluate at validated points; x is (..., n), t broadcasts against x[..., 0]."""
        pass

    def evaluate(self, x, t, order: int = 1, strict: bool = True) -> FlowSample:
        """Evaluate u and its derivative blocks.

        Args:
            x: position(s), shape (..., n)
            t: time(s), broadcastable against the batch shape
            order: 1 for u, grad_u, DuDt; 3 to add the Laplacian blocks
            strict: reject points outside the domain

        Returns:
            FlowSample with the requested blocks

        Raises:
            OutOfDomainError: If strict and a point lies outside the domain
            DomainError: If the order is not available
        """
        if order not in (1, 3):
            raise DomainError(f"Derivative order must be 1 or 3, got {order}")
        if order > self.max_derivative_order:
            raise DomainError(f"{self.__class__.__name__} provides derivatives up to order {self.max_derivative_order}")
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DomainError(f"Expected {self.dimension}-dimensional positions, got shape {x.shape}")
        if strict and self.domain is not None:
            inside = self.domain.contains(x)
            if not np.all(inside):
                bad = x.reshape(-1, self.dimension)[~np.asarray(inside).reshape(-1)][0]
                raise OutOfDomainError(tuple(float(c) for c in bad), self.domain)
        t = np.asarray(t, dtype=float)
        return self._evaluate(x, t, order)

    def velocity(self, x, t, strict: bool = True) -> np.ndarray:
        return self.evaluate(x, t, order=1, strict=strict).u

    def describe(self) -> Dict[str, Any]:
        """Name and parameters, for manifests and checkpoints."""
        return {"name": self.__class__.__name__}
