"""Pointwise bounds on the relative velocity.

For eps L_M < 1 every trajectory satisfies |w(tau)| <= E(tau) with

    E = |w0| sum_{j>=1} (eps L_M)^{j-1} psi^{*j}(tau) + eps L_B (1 - phi(tau))
        + eps^2 L_M L_B / (1 - eps L_M),

where psi^{*j} is the j-fold convolution power of psi. Since
0 <= psi^{*j} <= 1, cutting the series after J terms costs at most
|w0| (eps L_M)^J / (1 - eps L_M).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve

from .exceptions import CapabilityError, DomainError
from .flow.bounds import FieldBounds
from .params import ParticleParams
from .relaxation import RelaxationKernel, grid_step

logger = logging.getLogger(__name__)

# Safety cap on the number of series terms
_MAX_TERMS = 200


def _contraction(eps: float, L_M: float) -> float:
    value = eps * L_M
    if not (math.isfinite(value) and 0.0 <= value < 1.0):
        raise DomainError(f"eps * L_M = {value!r} must lie in [0, 1); the series diverges")
    return value


def _truncation_order(eps_lm: float, tol: float) -> int:
    """Smallest J >= 1 with (eps L_M)^J / (1 - eps L_M) < tol."""
    if tol <= 0:
        raise DomainError(f"Tolerance must be positive, got {tol}")
    J = 1
    while eps_lm**J / (1.0 - eps_lm) >= tol:
        J += 1
        if J > _MAX_TERMS:
            raise DomainError(f"More than {_MAX_TERMS} terms needed for eps L_M = {eps_lm}")
    return J


def discrete_convolution(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """Trapezoidal product rule for int_0^tau a(tau - s) b(s) ds on a uniform grid.

    The full sum is evaluated by FFT and the endpoint halves removed;
    round-off below zero is clipped.
    """
    n = len(a)
    full = fftconvolve(a, b)[:n]
    result = step * (full - 0.5 * (a[0] * b + a * b[0]))
    result[0] = 0.0
    return np.maximum(result, 0.0)


@dataclass
class ConvolutionSeries:
    """Convolution powers of psi and the sums built from them.

    Attributes:
        tau: uniform grid
        powers: psi^{*1}, ..., psi^{*J}
        eps_lm: eps L_M
        truncation_bound: (eps L_M)^J / (1 - eps L_M)
        h: sum_{j<=J} (eps L_M)^j psi^{*j}
        series: sum_{j<=J} (eps L_M)^{j-1} psi^{*j}
    """

    tau: np.ndarray
    powers: List[np.ndarray]
    eps_lm: float
    truncation_bound: float
    h: np.ndarray
    series: np.ndarray

    @property
    def terms(self) -> int:
        return len(self.powers)

    def integral_of_h(self) -> float:
        """Trapezoidal integral of h over the grid."""
        return float(trapezoid(self.h, self.tau))


def convolution_series(
    kernel: RelaxationKernel,
    epsLM: float,
    grid: np.ndarray,
    tol: float = 1e-6,
    terms: Optional[int] = None,
) -> ConvolutionSeries:
    """Build psi^{*j} by repeated discrete convolution.

    Args:
        kernel: relaxation kernel psi_kappa
        epsLM: eps L_M, in [0, 1)
        grid: uniform grid starting at 0
        tol: truncation tolerance on the tail bound
        terms: fixed number of terms instead of the tolerance rule

    Returns:
        ConvolutionSeries

    Raises:
        DomainError: If eps L_M >= 1 or the grid is not uniform
    """
    eps_lm = _contraction(epsLM, 1.0)
    step = grid_step(grid)
    tau = np.asarray(grid, dtype=float)
    J = terms if terms is not None else _truncation_order(eps_lm, tol)
    if J < 1:
        raise DomainError(f"At least one series term is needed, got {J}")

    psi = np.atleast_1d(kernel.psi(tau)).astype(float)
    powers = [psi]
    for _ in range(1, J):
        powers.append(discrete_convolution(psi, powers[-1], step) if step > 0 else np.zeros_like(psi))

    h = np.zeros_like(psi)
    series = np.zeros_like(psi)
    for j, power in enumerate(powers, start=1):
        h += eps_lm**j * power
        series += eps_lm ** (j - 1) * power
    bound = eps_lm**J / (1.0 - eps_lm)
    logger.debug(f"Convolution series with {J} terms (eps L_M = {eps_lm:.6g}, tail bound {bound:.3g})")
    return ConvolutionSeries(tau=tau, powers=powers, eps_lm=eps_lm, truncation_bound=bound, h=h, series=series)


@dataclass
class EnvelopeCurve:
    """Sampled envelope E(tau) and its parts."""

    tau: np.ndarray
    values: np.ndarray
    series_part: np.ndarray
    phi_part: np.ndarray
    const_part: float
    terms: int
    truncation_bound: float
    w0_norm: float
    eps: float
    L_B: float
    L_M: float
    kappa: float
    omit_eps2: bool

    @property
    def certificate(self) -> float:
        """Largest amount the dropped series terms could add to E."""
        return self.w0_norm * self.truncation_bound

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "tau": self.tau,
                "envelope": self.values,
                "series_part": self.series_part,
                "phi_part": self.phi_part,
                "const_part": np.full(self.tau.shape, self.const_part),
                "truncation_bound": np.full(self.tau.shape, self.truncation_bound),
            }
        )

    def __repr__(self) -> str:
        return (
            f"EnvelopeCurve(nodes={len(self.tau)}, J={self.terms}, |w0|={self.w0_norm:.6g}, "
            f"eps={self.eps:.6g}, L_B={self.L_B:.6g}, L_M={self.L_M:.6g}, omit_eps2={self.omit_eps2})"
        )


def envelope_curve(
    params: ParticleParams,
    bounds: FieldBounds,
    w0_norm: float,
    grid: np.ndarray,
    tol: float = 1e-6,
    omit_eps2: bool = True,
    terms: Optional[int] = None,
) -> EnvelopeCurve:
    """Evaluate the envelope on a uniform grid.

    Raises:
        DomainError: If eps L_M >= 1
    """
    eps = params.eps
    eps_lm = _contraction(eps, bounds.L_M)
    if w0_norm < 0:
        raise DomainError(f"|w0| must be non-negative, got {w0_norm}")
    kernel = RelaxationKernel(params.kappa)
    series = convolution_series(kernel, eps_lm, grid, tol=tol, terms=terms)
    phi = np.atleast_1d(kernel.phi(series.tau))
    series_part = w0_norm * series.series
    phi_part = eps * bounds.L_B * (1.0 - phi)
    const_part = 0.0 if omit_eps2 else eps * eps_lm * bounds.L_B / (1.0 - eps_lm)
    return EnvelopeCurve(
        tau=series.tau,
        values=series_part + phi_part + const_part,
        series_part=series_part,
        phi_part=phi_part,
        const_part=const_part,
        terms=series.terms,
        truncation_bound=series.truncation_bound,
        w0_norm=float(w0_norm),
        eps=eps,
        L_B=bounds.L_B,
        L_M=bounds.L_M,
        kappa=params.kappa,
        omit_eps2=omit_eps2,
    )


def asymptotic_bound(params: ParticleParams, bounds: FieldBounds) -> float:
    """Large-time bound eps L_B / (1 - eps L_M)."""
    eps_lm = _contraction(params.eps, bounds.L_M)
    return params.eps * bounds.L_B / (1.0 - eps_lm)


def sup_bound(params: ParticleParams, bounds: FieldBounds, w0_norm: float) -> float:
    """Uniform bound (|w0| + eps L_B) / (1 - eps L_M)."""
    eps_lm = _contraction(params.eps, bounds.L_M)
    return (w0_norm + params.eps * bounds.L_B) / (1.0 - eps_lm)


def envelope_limit(params: ParticleParams, bounds: FieldBounds, omit_eps2: bool = True) -> float:
    """Value the envelope approaches as tau grows.

    The series and 1 - phi parts tend to 0 and eps L_B; the constant term
    raises the sum to eps L_B / (1 - eps L_M).
    """
    if omit_eps2:
        _contraction(params.eps, bounds.L_M)
        return params.eps * bounds.L_B
    return asymptotic_bound(params, bounds)


def envelope_at(
    params: ParticleParams,
    bounds: FieldBounds,
    w0_norm: float,
    tau,
    omit_eps2: bool = True,
):
    """Large-tau envelope without a grid.

    Uses psi^{*j}(tau) ~ j psi(tau) (the integral of psi is 1), so the
    series sums to psi(tau) / (1 - eps L_M)^2.
    """
    eps_lm = _contraction(params.eps, bounds.L_M)
    kernel = RelaxationKernel(params.kappa)
    series = np.asarray(kernel.psi(tau)) / (1.0 - eps_lm) ** 2
    phi = np.asarray(kernel.phi(tau))
    const = 0.0 if omit_eps2 else params.eps * eps_lm * bounds.L_B / (1.0 - eps_lm)
    values = w0_norm * series + params.eps * bounds.L_B * (1.0 - phi) + const
    return float(values) if np.ndim(values) == 0 else values


@dataclass(frozen=True)
class ContinuationCertificate:
    """Window length over which a mild solution extends uniquely.

    ``k_prime`` is the bound used for the initial segment; it is the
    computable sup_bound.
    """

    h: float
    K: float
    k_prime: float
    eps: float
    L_A: float
    L_B: float
    L_M: float
    L_c: float
    w0_norm: float
    provenance: str = "k_prime = sup_bound(|w0|)"

    @property
    def h_physical(self) -> float:
        """Window length in flow time."""
        return self.eps * self.h

    def to_dict(self) -> Dict[str, Any]:
        return {
            "h": self.h,
            "h_physical": self.h_physical,
            "K": self.K,
            "k_prime": self.k_prime,
            "eps": self.eps,
            "L_A": self.L_A,
            "L_B": self.L_B,
            "L_M": self.L_M,
            "L_c": self.L_c,
            "w0_norm": self.w0_norm,
            "provenance": self.provenance,
        }


def continuation_window(params: ParticleParams, bounds: FieldBounds, w0_norm: float) -> ContinuationCertificate:
    """Continuation window h and ball radius K.

    h = 1/2 min(1 / (eps (L_M + 1)), 1 / (2 eps [3 L_c + L_M + L_c K']))
    with K' = sup_bound(|w0|), and K = K' + (L_B + L_A) / (2 (L_M + 1)).

    Raises:
        CapabilityError: If the bounds carry no Lipschitz estimate L_c
        DomainError: If eps L_M >= 1
    """
    if bounds.L_c is None:
        raise CapabilityError("The continuation window needs the Lipschitz estimate L_c")
    eps = params.eps
    k_prime = sup_bound(params, bounds, w0_norm)
    first = 1.0 / (eps * (bounds.L_M + 1.0))
    denominator = 2.0 * eps * (3.0 * bounds.L_c + bounds.L_M + bounds.L_c * k_prime)
    second = 1.0 / denominator if denominator > 0 else math.inf
    h = 0.5 * min(first, second)
    K = k_prime + (bounds.L_B + bounds.L_A) / (2.0 * (bounds.L_M + 1.0))
    logger.info(f"Continuation window h={h:.6g} (flow time {eps * h:.6g}), K={K:.6g}")
    return ContinuationCertificate(
        h=h,
        K=K,
        k_prime=k_prime,
        eps=eps,
        L_A=bounds.L_A,
        L_B=bounds.L_B,
        L_M=bounds.L_M,
        L_c=bounds.L_c,
        w0_norm=float(w0_norm),
    )


def fit_loglog_slope(tau, values, window: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(tau) for tau in the window.

    Raises:
        DomainError: If fewer than two positive samples fall in the window
    """
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (tau >= lo) & (tau <= hi) & (tau > 0) & (values > 0)
    if np.count_nonzero(mask) < 2:
        raise DomainError(f"Fewer than two positive samples in the window [{lo}, {hi}]")
    slope, _ = np.polyfit(np.log(tau[mask]), np.log(values[mask]), 1)
    return float(slope)


@dataclass
class DominationReport:
    """Comparison of a trajectory's |w| with an envelope."""

    violations: int
    worst_ratio: float
    worst_tau: float
    allowance: float
    first_violation_tau: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def dominated(self) -> bool:
        return self.violations == 0


def check_domination(record, curve: EnvelopeCurve, rtol: float = 1e-9) -> DominationReport:
    """Count nodes where |w| exceeds E (1 + rtol) plus the truncation certificate.

    The curve must be sampled on the record's grid measured from its
    memory origin.
    """
    speed = record.speed()
    if len(speed) != len(curve.values):
        raise DomainError(f"Envelope has {len(curve.values)} nodes, trajectory has {len(speed)}")
    allowance = curve.certificate
    limit = curve.values * (1.0 + rtol) + allowance
    excess = speed > limit
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(curve.values > 0, speed / curve.values, np.where(speed > 0, np.inf, 0.0))
    worst = int(np.argmax(ratio))
    first: Optional[float] = float(record.tau[np.argmax(excess)]) if excess.any() else None
    return DominationReport(
        violations=int(np.count_nonzero(excess)),
        worst_ratio=float(ratio[worst]),
        worst_tau=float(record.tau[worst]),
        allowance=allowance,
        first_violation_tau=first,
    )


def frozen_envelope_check(w0_norm: float, kernel: RelaxationKernel, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One-term envelope |w0| psi and the sampled psi, for fields with M_u = B_u = 0."""
    psi = np.atleast_1d(kernel.psi(np.asarray(grid, dtype=float)))
    return w0_norm * psi, psi
