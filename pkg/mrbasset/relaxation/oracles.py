"""Independent evaluators used to cross-check the closed-form kernels."""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate

from ..config import InternalConfig
from ..exceptions import DomainError, OracleError

logger = logging.getLogger(__name__)

# Fixed cotangent contour z(theta) = N (a theta cot(b theta) - c + i d theta)
_TALBOT_A = 0.5017
_TALBOT_B = 0.6407
_TALBOT_C = 0.6122
_TALBOT_D = 0.2645


def _talbot_sum(transform: Callable, t: float, nodes: int) -> Tuple[float, float]:
    """Talbot estimate of f(t) with N nodes and its round-off level.

    The terms grow like exp(0.171 N) near the real axis while f(t) can be
    many orders smaller, so the round-off of the sum is reported next to it.
    """
    k = np.arange(1, nodes + 1)
    theta = -math.pi + (2 * k - 1) * math.pi / nodes
    bt = _TALBOT_B * theta
    cot = 1.0 / np.tan(bt)
    z = nodes * (_TALBOT_A * theta * cot - _TALBOT_C + 1j * _TALBOT_D * theta)
    dz = nodes * (_TALBOT_A * cot - _TALBOT_A * bt / np.sin(bt) ** 2 + 1j * _TALBOT_D)
    terms = np.exp(z) * np.asarray(transform(z / t), dtype=complex) * dz
    scale = nodes * t
    roundoff = np.finfo(float).eps * float(np.sum(np.abs(terms) * (1.0 + np.abs(z)))) / scale
    return float(np.real(terms.sum() / (1j * scale))), roundoff


def _invert_one(transform: Callable, t: float, nodes: int, rtol: float, atol: float) -> float:
    previous, previous_noise = _talbot_sum(transform, t, nodes)
    for doubling in (2, 4):
        current, noise = _talbot_sum(transform, t, nodes * doubling)
        allowed = rtol * abs(current) + atol + InternalConfig.talbot_roundoff_factor * (previous_noise + noise)
        if abs(current - previous) <= allowed:
            return previous
        logger.debug(f"Talbot inversion at t={t}: {nodes * doubling // 2} and {nodes * doubling} nodes disagree")
        previous, previous_noise = current, noise
    raise OracleError(f"Talbot inversion did not converge at t={t} after two node doublings")


def inverse_laplace_oracle(
    transform: Callable,
    tau,
    nodes: Optional[int] = None,
    rtol: Optional[float] = None,
):
    """Invert a Laplace transform numerically on a Talbot contour.

    The transform must accept complex arrays and be analytic to the right of
    the contour (a branch cut along the negative real axis is fine). Each
    value is accepted once the estimates with N and 2N nodes agree to rtol,
    or to within a multiple of their estimated round-off when f(t) is too
    small for a relative test; a second doubling is tried before giving up.

    For the relaxation family the supported range is kappa = 0 or
    kappa >= 0.1 (InternalConfig.talbot_min_kappa). For smaller kappa the
    transform peaks like 1/kappa just above the cut near s = -1 and the
    node doublings no longer agree.

    Args:
        transform: F(s), vectorized over complex s
        tau: positive time(s)
        nodes: quadrature nodes N (default 32)
        rtol: agreement tolerance between node counts

    Returns:
        f(tau), same shape as tau

    Raises:
        DomainError: If any tau is not positive
        OracleError: If the node doublings do not agree
    """
    nodes = nodes or InternalConfig.talbot_nodes
    rtol = InternalConfig.talbot_rtol if rtol is None else rtol
    arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("Laplace inversion needs tau > 0")
    flat = [_invert_one(transform, float(t), nodes, rtol, InternalConfig.talbot_atol) for t in arr.ravel()]
    if arr.ndim == 0:
        return flat[0]
    return np.array(flat).reshape(arr.shape)


def voigt_functions(x: float, t: float) -> Tuple[float, float]:
    """U(x, t) and V(x, t) by adaptive quadrature.

    U = (4 pi t)^{-1/2} int exp(-(x+s)^2 / (4t)) / (1 + s^2) ds and V is the
    same integral with s in the numerator. Substituting s = -x + 2 sqrt(t) u
    turns the Gaussian into exp(-u^2); the Lorentzian centre is passed to
    the integrator as a breakpoint.
    """
    scale = 2.0 * math.sqrt(t)
    width = InternalConfig.voigt_half_width
    centre = x / scale
    points = [centre] if -width < centre < width else None

    def lorentz(u):
        s = scale * u - x
        return math.exp(-u * u) / (1.0 + s * s)

    def lorentz_odd(u):
        s = scale * u - x
        return s * math.exp(-u * u) / (1.0 + s * s)

    results = []
    for integrand in (lorentz, lorentz_odd):
        value, error = integrate.quad(
            integrand,
            -width,
            width,
            points=points,
            epsabs=InternalConfig.voigt_epsabs,
            epsrel=InternalConfig.voigt_epsrel,
            limit=InternalConfig.voigt_limit,
        )
        allowed = 1e3 * max(InternalConfig.voigt_epsabs, InternalConfig.voigt_epsrel * abs(value))
        if not math.isfinite(value) or error > allowed:
            raise OracleError(f"Voigt quadrature failed at x={x}, t={t} (error estimate {error:.3g})")
        results.append(value / math.sqrt(math.pi))
    return results[0], results[1]


def voigt_oracle(kappa: float, tau):
    """psi_kappa for 0 < kappa < 2 through the Voigt functions.

    psi = 2 / (kappa sqrt(pi tau)) [U(x, t) - kappa / sqrt(4 - kappa^2) V(x, t)]
    with x = -sqrt(4 - kappa^2) / kappa and t = 1 / (kappa^2 tau). The factor
    kappa / sqrt(4 - kappa^2) makes U and V cancel as kappa approaches 2, and
    x grows without bound as kappa approaches 0; within
    InternalConfig.voigt_kappa_margin of either end a warning is logged.

    Raises:
        DomainError: If kappa is outside (0, 2) or tau is not positive
    """
    if not (0.0 < kappa < 2.0):
        raise DomainError(f"The Voigt oracle needs 0 < kappa < 2, got {kappa}")
    margin = InternalConfig.voigt_kappa_margin
    if kappa < margin or 2.0 - kappa < margin:
        logger.warning(f"Voigt oracle at kappa={kappa} is close to the limits of (0, 2); expect lost digits")
    arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("The Voigt oracle needs tau > 0")
    beta = math.sqrt(4.0 - kappa * kappa)
    x = -beta / kappa

    def one(t_scaled: float) -> float:
        U, V = voigt_functions(x, 1.0 / (kappa * kappa * t_scaled))
        return 2.0 / (kappa * math.sqrt(math.pi * t_scaled)) * (U - kappa / beta * V)

    flat = [one(float(t)) for t in arr.ravel()]
    if arr.ndim == 0:
        return flat[0]
    return np.array(flat).reshape(arr.shape)
