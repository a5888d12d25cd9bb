"""Spatially uniform fields with closed-form particle dynamics."""

from typing import Any, Dict, Sequence

import numpy as np

from ..exceptions import DomainError
from .base import FlowField, FlowSample


class UniformAcceleration(FlowField):
    """u(x, t) = a t everywhere.

    All spatial derivatives vanish, so M_u = 0 and B_u is the constant
    (3R/2 - 1)(a - g). Both solver backends must then reproduce
    w = psi w0 + eps B (1 - phi).
    """

    max_derivative_order = 3
    uniform_forcing = True

    def __init__(self, acceleration: Sequence[float] = (0.0, 0.0)):
        acceleration = tuple(float(c) for c in acceleration)
        if not acceleration or not all(np.isfinite(acceleration)):
            raise DomainError(f"Acceleration must be a finite vector, got {acceleration!r}")
        self.acceleration = acceleration

    @property
    def dimension(self) -> int:
        return len(self.acceleration)

    def describe(self) -> Dict[str, Any]:
        return {"name": "uniform_acceleration", "acceleration": list(self.acceleration)}

    def _evaluate(self, x: np.ndarray, t: np.ndarray, order: int) -> FlowSample:
        batch = x.shape[:-1]
        n = self.dimension
        a = np.asarray(self.acceleration)
        t = np.broadcast_to(t, batch)
        zeros_v = np.zeros(batch + (n,))
        zeros_m = np.zeros(batch + (n, n))
        sample = FlowSample(
            u=t[..., None] * a,
            grad_u=zeros_m,
            DuDt=np.broadcast_to(a, batch + (n,)).copy(),
        )
        if order >= 3:
            sample.lap_u = zeros_v
            sample.grad_lap_u = zeros_m.copy()
            sample.DlapuDt = zeros_v.copy()
        return sample

    def __repr__(self) -> str:
        return f"UniformAcceleration(acceleration={self.acceleration})"


class QuiescentFlow(UniformAcceleration):
    """Fluid at rest. With g = 0 this is the frozen test field M_u = B_u = 0."""

    def __init__(self, dimension: int = 2):
        if dimension < 1:
            raise DomainError(f"Dimension must be positive, got {dimension}")
        super().__init__((0.0,) * dimension)

    def describe(self) -> Dict[str, Any]:
        return {"name": "quiescent", "dimension": self.dimension}

    def __repr__(self) -> str:
        return f"QuiescentFlow(dimension={self.dimension})"
