"""Dimensionless groups of the Maxey-Riley equation."""

import cmath
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from .exceptions import DomainError, ValidationError

logger = logging.getLogger(__name__)

# a/L above this is reported, never rejected
_SMALL_PARTICLE_RATIO = 0.1


@dataclass(frozen=True)
class PhysicalSetup:
    """Dimensional description of a particle in a flow.

    Attributes:
        rho_p: particle density
        rho_f: fluid density
        a: particle radius
        nu: kinematic viscosity
        U: characteristic velocity
        L: characteristic length
        g: gravitational acceleration vector
    """

    rho_p: float
    rho_f: float
    a: float
    nu: float
    U: float
    L: float
    g: Tuple[float, ...] = (0.0, 0.0)

    def validate(self) -> None:
        """Check that every physical quantity is positive and finite.

        Raises:
            ValidationError: Naming the first offending field
        """
        for name in ("rho_p", "rho_f", "a", "nu", "U", "L"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValidationError(name, value, f"'{name}' must be positive and finite, got {value!r}")
        if not all(math.isfinite(c) for c in self.g):
            raise ValidationError("g", self.g, f"'g' must be finite, got {self.g!r}")
        if self.a / self.L > _SMALL_PARTICLE_RATIO:
            logger.warning(
                f"Particle radius is not small against the flow scale (a/L = {self.a / self.L:.3g})"
            )


@dataclass(frozen=True)
class ParticleParams:
    """Dimensionless numbers R, St, Re and the groups derived from them.

    mu = R/St, kappa = sqrt(9R/2), gamma = 9R/(2Re) and eps = St/R. A
    ``synthetic`` instance may carry any kappa >= 0 (kappa = 0 switches the
    memory term off); its other groups keep their usual meaning.
    """

    R: float
    St: float
    Re: float
    mu: float
    kappa: float
    gamma: float
    eps: float
    g_scaled: Tuple[float, ...] = (0.0, 0.0)
    synthetic: bool = False

    @classmethod
    def from_dimensionless(
        cls, R: float, St: float, Re: float, g_scaled: Sequence[float] = (0.0, 0.0)
    ) -> "ParticleParams":
        """Build parameters from R, St and Re.

        Args:
            R: density ratio 2 rho_f / (rho_f + 2 rho_p), in (0, 2)
            St: Stokes number
            Re: fluid Reynolds number
            g_scaled: dimensionless gravity g L / U^2

        Returns:
            ParticleParams with all derived groups

        Raises:
            DomainError: If R is outside (0, 2) or St, Re are not positive
        """
        if not (math.isfinite(R) and 0.0 < R < 2.0):
            raise DomainError(f"Density ratio R must lie in (0, 2), got {R!r}")
        if not (math.isfinite(St) and St > 0.0):
            raise DomainError(f"Stokes number must be positive, got {St!r}")
        if not (math.isfinite(Re) and Re > 0.0):
            raise DomainError(f"Reynolds number must be positive, got {Re!r}")
        g_scaled = tuple(float(c) for c in g_scaled)
        if not all(math.isfinite(c) for c in g_scaled):
            raise DomainError(f"Scaled gravity must be finite, got {g_scaled!r}")
        return cls(
            R=float(R),
            St=float(St),
            Re=float(Re),
            mu=R / St,
            kappa=math.sqrt(9.0 * R / 2.0),
            gamma=9.0 * R / (2.0 * Re),
            eps=St / R,
            g_scaled=g_scaled,
        )

    @classmethod
    def from_physical(cls, setup: PhysicalSetup) -> "ParticleParams":
        """Derive the dimensionless groups from a dimensional setup."""
        setup.validate()
        Re = setup.U * setup.L / setup.nu
        St = (2.0 / 9.0) * (setup.a / setup.L) ** 2 * Re
        R = 2.0 * setup.rho_f / (setup.rho_f + 2.0 * setup.rho_p)
        g_scaled = tuple(c * setup.L / setup.U**2 for c in setup.g)
        logger.debug(f"Physical setup gives R={R:.6g}, St={St:.6g}, Re={Re:.6g}")
        return cls.from_dimensionless(R, St, Re, g_scaled)

    @classmethod
    def synthetic_mode(
        cls,
        kappa: float,
        eps: float = 0.01,
        R: float = 2.0 / 3.0,
        Re: float = 1.0,
        g_scaled: Sequence[float] = (0.0, 0.0),
    ) -> "ParticleParams":
        """Parameters with an imposed memory strength (kappa = 0 allowed).

        Used for oracle runs; kappa is decoupled from R.
        """
        if not (math.isfinite(kappa) and kappa >= 0.0):
            raise DomainError(f"Memory strength must be non-negative, got {kappa!r}")
        if not (math.isfinite(eps) and eps > 0.0):
            raise DomainError(f"eps must be positive, got {eps!r}")
        base = cls.from_dimensionless(R, eps * R, Re, g_scaled)
        return cls(
            R=base.R,
            St=base.St,
            Re=base.Re,
            mu=base.mu,
            kappa=float(kappa),
            gamma=base.gamma,
            eps=base.eps,
            g_scaled=base.g_scaled,
            synthetic=True,
        )

    @property
    def lambdas(self) -> Tuple[complex, complex]:
        """Roots lambda+, lambda- of z^2 - kappa z + 1."""
        return characteristic_roots(self.kappa)

    @property
    def buoyancy_coefficient(self) -> float:
        """The factor 3R/2 - 1 in front of the material acceleration."""
        return 1.5 * self.R - 1.0

    @property
    def faxen_coefficient(self) -> float:
        """gamma / (6 mu), the weight of the Laplacian corrections."""
        return self.gamma / (6.0 * self.mu)

    @property
    def dimension(self) -> int:
        return len(self.g_scaled)

    def gravity(self) -> np.ndarray:
        return np.asarray(self.g_scaled, dtype=float)

    def physical_time(self, tau, t0: float = 0.0):
        """Map scaled time tau to flow time t = t0 + eps tau."""
        return t0 + self.eps * np.asarray(tau, dtype=float)

    def dimensional_time(self, tau, setup: PhysicalSetup, t0: float = 0.0):
        """Scaled time tau in the units of the setup, L t / U."""
        return time_scale(setup) * self.physical_time(tau, t0)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["g_scaled"] = list(self.g_scaled)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ParticleParams":
        data = dict(data)
        data["g_scaled"] = tuple(data.get("g_scaled", (0.0, 0.0)))
        return cls(**data)


def time_scale(setup: PhysicalSetup) -> float:
    """Advective time L / U of a dimensional setup."""
    setup.validate()
    return setup.L / setup.U


def characteristic_roots(kappa: float) -> Tuple[complex, complex]:
    """lambda+- = (kappa +- sqrt(kappa^2 - 4)) / 2, complex when kappa < 2."""
    root = cmath.sqrt(kappa * kappa - 4.0)
    return (kappa + root) / 2.0, (kappa - root) / 2.0
