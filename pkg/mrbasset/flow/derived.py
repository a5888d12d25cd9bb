"""Forcing terms A_u, B_u and M_u of the relative-velocity equation."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import CapabilityError, DomainError
from ..params import ParticleParams
from .base import FlowField

logger = logging.getLogger(__name__)


@dataclass
class DerivedSample:
    """A_u, B_u and M_u at a batch of points."""

    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    # (gamma / (6 mu)) lap u, zero without Faxen corrections
    shift: np.ndarray


@dataclass(frozen=True)
class DerivedFields:
    """Forcing of w' + kappa d^{1/2} w + w = eps (-M_u w + B_u).

    Without Faxen corrections A_u = u, M_u = grad u and
    B_u = (3R/2 - 1)(Du/Dt - g). With them, c = gamma / (6 mu) and

        A_u = u + c lap u
        M_u = grad u + c grad lap u
        B_u = (3R/2 - 1)(Du/Dt - g) + (R/20 - 1/6)(gamma / mu) D(lap u)/Dt
              - c M_u lap u
    """

    field: FlowField
    params: ParticleParams
    faxen: bool = False

    @property
    def order(self) -> int:
        return 3 if self.faxen else 1

    @property
    def dimension(self) -> int:
        return self.field.dimension

    @property
    def uniform(self) -> bool:
        """True when M_u and B_u do not depend on position or time."""
        return self.field.uniform_forcing

    def evaluate(self, x, t, strict: bool = False) -> DerivedSample:
        """Evaluate every derived term.

        Args:
            x: position(s), shape (..., n)
            t: flow time(s)
            strict: reject positions outside the field's domain

        Returns:
            DerivedSample
        """
        sample = self.field.evaluate(x, t, order=self.order, strict=strict)
        p = self.params
        g = p.gravity()
        B = p.buoyancy_coefficient * (sample.DuDt - g)
        if not self.faxen:
            return DerivedSample(A=sample.u, B=B, M=sample.grad_u, shift=np.zeros_like(sample.u))

        c = p.faxen_coefficient
        shift = c * sample.lap_u
        M = sample.grad_u + c * sample.grad_lap_u
        B = (
            B
            + (p.R / 20.0 - 1.0 / 6.0) * (p.gamma / p.mu) * sample.DlapuDt
            - c * np.einsum("...ij,...j->...i", M, sample.lap_u)
        )
        return DerivedSample(A=sample.u + shift, B=B, M=M, shift=shift)

    def A(self, x, t, strict: bool = False) -> np.ndarray:
        return self.evaluate(x, t, strict).A

    def B(self, x, t, strict: bool = False) -> np.ndarray:
        return self.evaluate(x, t, strict).B

    def M(self, x, t, strict: bool = False) -> np.ndarray:
        return self.evaluate(x, t, strict).M

    def inside(self, x) -> bool:
        domain = self.field.domain
        return True if domain is None else bool(np.all(domain.contains(x)))


def derived_fields(field: FlowField, params: ParticleParams, faxen: bool = False) -> DerivedFields:
    """Bind a flow field to particle parameters.

    Args:
        field: the carrier flow
        params: particle parameters (gravity dimension must match the flow)
        faxen: include the Faxen corrections

    Returns:
        DerivedFields

    Raises:
        CapabilityError: If Faxen corrections need derivatives the field lacks
        DomainError: If the gravity vector and the flow differ in dimension
    """
    if faxen and field.max_derivative_order < 3:
        raise CapabilityError(f"{field.__class__.__name__} has no third-order derivatives; Faxen corrections need them")
    if params.dimension != field.dimension:
        raise DomainError(f"Gravity has dimension {params.dimension}, the flow has dimension {field.dimension}")
    logger.debug(f"Derived fields for R={params.R:.6g}, faxen={'on' if faxen else 'off'}")
    return DerivedFields(field=field, params=params, faxen=faxen)


def uniform_forcing(fields: DerivedFields) -> Optional[np.ndarray]:
    """Return the constant B_u of a uniform field whose M_u vanishes, else None."""
    if not fields.uniform:
        return None
    origin = np.zeros(fields.dimension)
    sample = fields.evaluate(origin, 0.0)
    if np.any(sample.M != 0.0):
        return None
    return np.asarray(sample.B, dtype=float)
