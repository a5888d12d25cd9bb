"""Closed-form fractional relaxation kernels psi and phi.

Both kernels solve the linear relaxation problem w' + kappa d^{1/2}w + w = 0.
psi is its fundamental solution (w = psi(tau) w0) and phi = 1 - int_0^tau psi,
so psi = -phi'. In Laplace space

    Psi(s) = 1 / (s + kappa sqrt(s) + 1),    Phi(s) = (1 - Psi(s)) / s.

Factoring s + kappa sqrt(s) + 1 = (sqrt(s) + lambda+)(sqrt(s) + lambda-) with
lambda+ lambda- = 1 and lambda+ + lambda- = kappa turns both into combinations
of E(-lambda sqrt(tau)), where E(-z) = E_{1/2}(-z) = exp(z^2) erfc(z). Three
regimes follow from the discriminant kappa^2 - 4:

* kappa > 2: real, distinct roots;
* kappa = 2: double root lambda = 1;
* 0 < kappa < 2: complex conjugate roots, the kernels are twice a real part.

kappa = 0 (synthetic, memory off) gives psi = phi = exp(-tau).
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import special

from ..config import InternalConfig
from ..exceptions import CapabilityError, DomainError
from ..params import characteristic_roots

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

BACKENDS = ("closed_form", "laplace_oracle", "voigt_oracle")

# |kappa - 2| below this is treated as the double-root case
_CRITICAL_BAND = 1e-9

_SQRT_PI = math.sqrt(math.pi)


def _scaled_erfc(z):
    """exp(z^2) erfc(z) without forming either factor."""
    if np.iscomplexobj(z):
        return special.wofz(1j * z)
    return special.erfcx(z)


def mittag_leffler_half(z):
    """Evaluate E_{1/2}(-z) = exp(z^2) erfc(z).

    The scaled complementary error function is used directly, so large
    arguments do not overflow.

    Args:
        z: real or complex scalar or array

    Returns:
        E_{1/2}(-z), complex for complex input

    Raises:
        DomainError: If z is not finite
    """
    arr = np.asarray(z)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"Mittag-Leffler argument must be finite, got {z!r}")
    value = _scaled_erfc(arr)
    if np.ndim(value) == 0:
        return value.item()
    return value


def mittag_leffler_half_asymptotic(z, terms: int = 3):
    """Large-|z| expansion of E_{1/2}(-z).

    1/(z sqrt(pi)) * (1 - 1/(2z^2) + 3/(4z^4) - 15/(8z^6) + ...), the
    complementary error function expansion; valid for |arg z| < 3 pi / 4.
    """
    if terms < 1:
        raise DomainError(f"terms must be at least 1, got {terms}")
    z = np.asarray(z)
    if np.any(z == 0):
        raise DomainError("Asymptotic expansion is undefined at z = 0")
    inv = 1.0 / (2.0 * z * z)
    total = np.ones_like(z, dtype=np.result_type(z, float))
    coefficient = 1.0
    for m in range(1, terms):
        coefficient *= -(2 * m - 1)
        total = total + coefficient * inv**m
    return total / (z * _SQRT_PI)


@dataclass(frozen=True)
class RelaxationKernel:
    """Evaluator for psi_kappa and phi_kappa.

    Attributes:
        kappa: memory strength, >= 0 (0 only for synthetic runs)
        backend: closed_form, laplace_oracle or voigt_oracle
    """

    kappa: float
    backend: str = "closed_form"

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa >= 0.0):
            raise DomainError(f"kappa must be non-negative and finite, got {self.kappa!r}")
        if self.backend not in BACKENDS:
            raise DomainError(f"Unknown kernel backend: {self.backend}")
        if self.backend == "voigt_oracle" and not (0.0 < self.kappa < 2.0):
            raise DomainError(f"The Voigt oracle needs 0 < kappa < 2, got {self.kappa}")

    @property
    def lambdas(self) -> Tuple[complex, complex]:
        return characteristic_roots(self.kappa)

    @property
    def lambda_plus(self) -> complex:
        return self.lambdas[0]

    @property
    def lambda_minus(self) -> complex:
        return self.lambdas[1]

    @property
    def regime(self) -> str:
        if self.kappa == 0.0:
            return "memoryless"
        if abs(self.kappa - 2.0) <= _CRITICAL_BAND:
            return "critical"
        return "overdamped" if self.kappa > 2.0 else "oscillatory"

    def transform(self, s):
        """Laplace transform Psi(s) = 1 / (s + kappa sqrt(s) + 1)."""
        s = np.asarray(s, dtype=complex)
        return 1.0 / (s + self.kappa * np.sqrt(s) + 1.0)

    def complement_transform(self, s):
        """Laplace transform of phi, (1 - Psi(s)) / s."""
        s = np.asarray(s, dtype=complex)
        root = np.sqrt(s)
        return (self.kappa / root + 1.0) / (s + self.kappa * root + 1.0)

    def with_backend(self, backend: str) -> "RelaxationKernel":
        return RelaxationKernel(self.kappa, backend)

    def psi(self, tau: ArrayLike) -> ArrayLike:
        return psi(self, tau)

    def phi(self, tau: ArrayLike) -> ArrayLike:
        return phi(self, tau)


@dataclass(frozen=True)
class KernelTable:
    """psi and phi sampled on a uniform grid starting at 0."""

    tau: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    step: float
    kappa: float

    def __len__(self) -> int:
        return len(self.tau)


def laplace_transform(kernel: RelaxationKernel, s, which: str = "psi"):
    """Psi(s) or Phi(s) of the kernel at complex s with Re(sqrt(s)) > 0."""
    if which == "psi":
        return kernel.transform(s)
    elif which == "phi":
        return kernel.complement_transform(s)
    raise DomainError(f"Unknown kernel '{which}', expected psi or phi")


def _check_tau(tau: ArrayLike) -> np.ndarray:
    arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Scaled time must be finite")
    if np.any(arr < 0):
        raise DomainError(f"Scaled time must be non-negative, got min {arr.min()}")
    return arr


def _as_output(values: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(values)
    return values


def _below_talbot_range(kappa: float) -> bool:
    return 0.0 < kappa < InternalConfig.talbot_min_kappa


def psi(kernel: RelaxationKernel, tau: ArrayLike) -> ArrayLike:
    """Evaluate psi_kappa(tau) with the kernel's backend.

    The laplace_oracle backend hands 0 < kappa < InternalConfig.talbot_min_kappa
    to the Voigt oracle, where the Talbot contour is unreliable.

    Args:
        kernel: the relaxation kernel
        tau: scaled time(s), >= 0

    Returns:
        psi values in [0, 1], same shape as tau

    Raises:
        DomainError: If tau is negative
    """
    arr = _check_tau(tau)
    if kernel.backend == "closed_form":
        values = _psi_closed_form(kernel, arr)
    else:
        from .oracles import inverse_laplace_oracle, voigt_oracle

        positive = np.where(arr > 0, arr, 1.0)
        use_talbot = kernel.backend == "laplace_oracle"
        if use_talbot and _below_talbot_range(kernel.kappa):
            logger.warning(f"kappa={kernel.kappa} is below the Talbot range; psi comes from the Voigt oracle")
            use_talbot = False
        if use_talbot:
            values = np.asarray(inverse_laplace_oracle(kernel.transform, positive), dtype=float)
        else:
            values = np.asarray(voigt_oracle(kernel.kappa, positive), dtype=float)
        values = np.where(arr > 0, values, 1.0)
    return _as_output(values, tau)


def phi(kernel: RelaxationKernel, tau: ArrayLike) -> ArrayLike:
    """Evaluate phi_kappa(tau) = 1 - int_0^tau psi.

    Raises:
        DomainError: If tau is negative
        CapabilityError: For the Voigt backend, which only represents psi
    """
    arr = _check_tau(tau)
    if kernel.backend == "closed_form":
        values = _phi_closed_form(kernel, arr)
    elif kernel.backend == "laplace_oracle":
        from .oracles import inverse_laplace_oracle

        if _below_talbot_range(kernel.kappa):
            logger.warning(f"kappa={kernel.kappa} is below the Talbot range; phi may fail to converge")
        positive = np.where(arr > 0, arr, 1.0)
        values = np.asarray(inverse_laplace_oracle(kernel.complement_transform, positive), dtype=float)
        values = np.where(arr > 0, values, 1.0)
    else:
        raise CapabilityError("The Voigt oracle only evaluates psi")
    return _as_output(values, tau)


def _psi_closed_form(kernel: RelaxationKernel, tau: np.ndarray) -> np.ndarray:
    root = np.sqrt(tau)
    regime = kernel.regime
    if regime == "memoryless":
        values = np.exp(-tau)
    elif regime == "critical":
        values = _scaled_erfc(root) * (1.0 + 2.0 * tau) - 2.0 * root / _SQRT_PI
    elif regime == "overdamped":
        lp, lm = (l.real for l in kernel.lambdas)
        values = (lp * _scaled_erfc(lp * root) - lm * _scaled_erfc(lm * root)) / (lp - lm)
    else:
        # Conjugate roots: the bracket is 2i Im(lambda+ E+)
        lp = kernel.lambda_plus
        values = np.imag(lp * _scaled_erfc(lp * root.astype(complex))) / lp.imag
    return np.where(tau == 0, 1.0, values)


def _phi_closed_form(kernel: RelaxationKernel, tau: np.ndarray) -> np.ndarray:
    root = np.sqrt(tau)
    regime = kernel.regime
    if regime == "memoryless":
        values = np.exp(-tau)
    elif regime == "critical":
        values = _scaled_erfc(root) * (1.0 - 2.0 * tau) + 2.0 * root / _SQRT_PI
    elif regime == "overdamped":
        lp, lm = (l.real for l in kernel.lambdas)
        values = (lp * _scaled_erfc(lm * root) - lm * _scaled_erfc(lp * root)) / (lp - lm)
    else:
        lp = kernel.lambda_plus
        values = np.imag(lp * np.conj(_scaled_erfc(lp * root.astype(complex)))) / lp.imag
    return np.where(tau == 0, 1.0, values)


def psi_asymptotic(kernel: RelaxationKernel, tau: ArrayLike, terms: int = 1) -> ArrayLike:
    """Large-tau form of psi: kappa / (2 sqrt(pi)) tau^{-3/2}.

    With terms=2 the relative correction -3 (kappa^2 - 2) / (2 tau) is added.

    Raises:
        DomainError: If tau is not positive or terms is not 1 or 2
    """
    arr = _check_positive(tau)
    if terms not in (1, 2):
        raise DomainError(f"terms must be 1 or 2, got {terms}")
    values = kernel.kappa / (2.0 * _SQRT_PI) * arr**-1.5
    if terms == 2:
        values = values * (1.0 - 1.5 * (kernel.kappa**2 - 2.0) / arr)
    return _as_output(values, tau)


def phi_asymptotic(kernel: RelaxationKernel, tau: ArrayLike, terms: int = 1) -> ArrayLike:
    """Large-tau form of phi: kappa / sqrt(pi tau), optionally with its first correction."""
    arr = _check_positive(tau)
    if terms not in (1, 2):
        raise DomainError(f"terms must be 1 or 2, got {terms}")
    values = kernel.kappa / np.sqrt(math.pi * arr)
    if terms == 2:
        values = values * (1.0 - 0.5 * (kernel.kappa**2 - 2.0) / arr)
    return _as_output(values, tau)


def _check_positive(tau: ArrayLike) -> np.ndarray:
    arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("Asymptotic forms need tau > 0")
    return arr


def uniform_grid(step: float, tau_end: float) -> np.ndarray:
    """Nodes 0, step, ..., N step with N step the largest multiple <= tau_end.

    Raises:
        DomainError: If step is not positive or tau_end < step
    """
    if not (math.isfinite(step) and step > 0):
        raise DomainError(f"Grid step must be positive, got {step!r}")
    if not (math.isfinite(tau_end) and tau_end >= step * (1.0 - 1e-12)):
        raise DomainError(f"Horizon {tau_end!r} is shorter than one step {step!r}")
    n = int(math.floor(tau_end / step + 1e-9))
    return step * np.arange(n + 1, dtype=float)


def grid_step(grid: np.ndarray) -> float:
    """Return the step of a uniform grid starting at 0.

    Raises:
        DomainError: If the grid is empty, does not start at 0 or is not uniform
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("Time grid is empty")
    if grid[0] != 0.0:
        raise DomainError(f"Time grid must start at 0, starts at {grid[0]}")
    if grid.size == 1:
        return 0.0
    step = grid[1] - grid[0]
    expected = step * np.arange(grid.size)
    if step <= 0 or not np.allclose(grid, expected, rtol=1e-9, atol=1e-12 * max(1.0, grid[-1])):
        raise DomainError("Time grid is not uniform")
    return float(step)


def psi_grid(kernel: RelaxationKernel, grid: np.ndarray) -> KernelTable:
    """Tabulate psi and phi on a uniform grid.

    Raises:
        DomainError: If the grid is empty or not uniform
    """
    step = grid_step(grid)
    grid = np.asarray(grid, dtype=float)
    table = KernelTable(
        tau=grid,
        psi=np.atleast_1d(psi(kernel, grid)),
        phi=np.atleast_1d(phi(kernel, grid)),
        step=step,
        kappa=kernel.kappa,
    )
    logger.debug(f"Tabulated kernel kappa={kernel.kappa} on {len(grid)} nodes (step {step})")
    return table
