"""Time-periodic double-gyre flow on [0, 2] x [0, 1]."""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from ..exceptions import DomainError
from .base import Domain, FlowField, FlowSample

_PI = math.pi


@dataclass(frozen=True)
class DoubleGyre(FlowField):
    """Stream function H = A sin(pi f(x, t)) sin(pi y) with
    f = alpha sin(omega t) x^2 + (1 - 2 alpha sin(omega t)) x.

    u = (-dH/dy, dH/dx). H separates as A S(x, t) Y(y), so every derivative
    block is a product of an x-derivative of S = sin(pi f) and a
    y-derivative of Y = sin(pi y).
    """

    A: float = 0.1
    omega: float = _PI
    alpha: float = 0.01

    max_derivative_order = 3

    def __post_init__(self):
        for name in ("A", "omega", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"Double-gyre parameter {name} must be finite")
        if self.omega <= 0:
            raise DomainError(f"omega must be positive, got {self.omega}")

    @property
    def dimension(self) -> int:
        return 2

    @property
    def domain(self) -> Optional[Domain]:
        return Domain((0.0, 0.0), (2.0, 1.0))

    @property
    def period(self) -> Optional[float]:
        return 2.0 * _PI / self.omega

    def describe(self) -> Dict[str, Any]:
        return {"name": "double_gyre", "amplitude": self.A, "omega": self.omega, "alpha": self.alpha}

    def _evaluate(self, x: np.ndarray, t: np.ndarray, order: int) -> FlowSample:
        px, py = x[..., 0], x[..., 1]
        st, ct = np.sin(self.omega * t), np.cos(self.omega * t)
        a = self.alpha * st
        b = 1.0 - 2.0 * self.alpha * st

        # g = pi f and its x-derivatives; f is quadratic in x
        g = _PI * (a * px * px + b * px)
        g1 = _PI * (2.0 * a * px + b)
        g2 = _PI * 2.0 * a
        # time derivatives of g, g1, g2
        rate = self.alpha * self.omega * ct
        gt = _PI * rate * (px * px - 2.0 * px)
        g1t = _PI * 2.0 * rate * (px - 1.0)
        g2t = _PI * 2.0 * rate

        sg, cg = np.sin(g), np.cos(g)
        S0 = sg
        S1 = cg * g1
        S2 = -sg * g1**2 + cg * g2
        S0t = cg * gt
        S1t = -sg * gt * g1 + cg * g1t

        sy, cy = np.sin(_PI * py), np.cos(_PI * py)
        Y0 = sy
        Y1 = _PI * cy
        Y2 = -(_PI**2) * sy

        amp = self.A
        H01 = amp * S0 * Y1
        H10 = amp * S1 * Y0
        H11 = amp * S1 * Y1
        H02 = amp * S0 * Y2
        H20 = amp * S2 * Y0

        u = np.stack([-H01, H10], axis=-1)
        grad_u = np.stack(
            [np.stack([-H11, -H02], axis=-1), np.stack([H20, H11], axis=-1)],
            axis=-2,
        )
        u_t = np.stack([-amp * S0t * Y1, amp * S1t * Y0], axis=-1)
        DuDt = u_t + np.einsum("...ij,...j->...i", grad_u, u)
        sample = FlowSample(u=u, grad_u=grad_u, DuDt=DuDt)
        if order < 3:
            return sample

        S3 = -cg * g1**3 - 3.0 * sg * g1 * g2
        S4 = sg * g1**4 - 6.0 * cg * g1**2 * g2 - 3.0 * sg * g2**2
        S2t = -cg * gt * g1**2 - 2.0 * sg * g1 * g1t - sg * gt * g2 + cg * g2t
        S3t = sg * gt * g1**3 - 3.0 * cg * g1**2 * g1t - 3.0 * (cg * gt * g1 * g2 + sg * g1t * g2 + sg * g1 * g2t)
        Y3 = -(_PI**3) * cy
        Y4 = _PI**4 * sy

        H21 = amp * S2 * Y1
        H03 = amp * S0 * Y3
        H30 = amp * S3 * Y0
        H12 = amp * S1 * Y2
        H31 = amp * S3 * Y1
        H13 = amp * S1 * Y3
        H22 = amp * S2 * Y2
        H04 = amp * S0 * Y4
        H40 = amp * S4 * Y0

        lap_u = np.stack([-(H21 + H03), H30 + H12], axis=-1)
        grad_lap_u = np.stack(
            [np.stack([-(H31 + H13), -(H22 + H04)], axis=-1), np.stack([H40 + H22, H31 + H13], axis=-1)],
            axis=-2,
        )
        lap_t = np.stack([-amp * (S2t * Y1 + S0t * Y3), amp * (S3t * Y0 + S1t * Y2)], axis=-1)
        sample.lap_u = lap_u
        sample.grad_lap_u = grad_lap_u
        sample.DlapuDt = lap_t + np.einsum("...ij,...j->...i", grad_lap_u, u)
        return sample
