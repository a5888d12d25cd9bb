"""History storage and quadrature weight tables for the memory integrals."""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import special
from scipy.signal import fftconvolve

from ..config import InternalConfig
from ..exceptions import DomainError
from ..relaxation import RelaxationKernel

logger = logging.getLogger(__name__)

# non-integer powers of tau in the expansion of w below second order
START_EXPONENTS = (0.5, 1.5)
START_NODES = 3


@dataclass
class HistoryBuffer:
    """Everything stored per node of a trajectory.

    Node k sits at local scaled time k * step; its flow time is
    t0 + eps * k * step. ``f`` holds the forcing -M_u w + B_u and ``g`` the
    position rate w + A_u at each node. ``sum_w[k]`` and ``sum_f[k]`` are
    running sums over nodes 1..k, accumulated node by node so a truncated
    buffer continues exactly as the original did.
    """

    step: float
    t0: float
    eps: float
    w: np.ndarray
    y: np.ndarray
    f: np.ndarray
    g: np.ndarray
    sum_w: np.ndarray
    sum_f: np.ndarray
    filled: int = 0
    exit_node: int = -1

    @classmethod
    def allocate(cls, step: float, last: int, dimension: int, t0: float, eps: float) -> "HistoryBuffer":
        shape = (last + 1, dimension)
        return cls(
            step=float(step),
            t0=float(t0),
            eps=float(eps),
            w=np.zeros(shape),
            y=np.zeros(shape),
            f=np.zeros(shape),
            g=np.zeros(shape),
            sum_w=np.zeros(shape),
            sum_f=np.zeros(shape),
        )

    @property
    def capacity(self) -> int:
        return self.w.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.w.shape[1]

    @property
    def tau(self) -> np.ndarray:
        return self.step * np.arange(self.filled, dtype=float)

    def time(self, n: int) -> float:
        """Flow time of node n."""
        return self.t0 + self.eps * n * self.step

    def store(self, n: int, w: np.ndarray, y: np.ndarray, f: np.ndarray, g: np.ndarray) -> None:
        if n != self.filled:
            raise DomainError(f"Node {n} stored out of order (expected {self.filled})")
        self.w[n] = w
        self.y[n] = y
        self.f[n] = f
        self.g[n] = g
        if n > 0:
            self.sum_w[n] = self.sum_w[n - 1] + w
            self.sum_f[n] = self.sum_f[n - 1] + f
        self.filled = n + 1

    def ensure_capacity(self, last: int) -> None:
        """Grow the arrays so nodes up to ``last`` fit."""
        if last <= self.capacity:
            return
        extra = last - self.capacity
        for name in ("w", "y", "f", "g", "sum_w", "sum_f"):
            old = getattr(self, name)
            setattr(self, name, np.concatenate([old, np.zeros((extra, old.shape[1]))]))

    def truncated(self, last: int) -> "HistoryBuffer":
        """Copy holding nodes 0..last only."""
        if not 0 <= last < self.filled:
            raise DomainError(f"Cannot truncate a {self.filled}-node history at node {last}")
        keep = slice(0, last + 1)
        exit_node = self.exit_node if 0 <= self.exit_node <= last else -1
        return replace(
            self,
            w=self.w[keep].copy(),
            y=self.y[keep].copy(),
            f=self.f[keep].copy(),
            g=self.g[keep].copy(),
            sum_w=self.sum_w[keep].copy(),
            sum_f=self.sum_f[keep].copy(),
            filled=last + 1,
            exit_node=exit_node,
        )

    def trimmed(self) -> "HistoryBuffer":
        """Drop unused capacity."""
        if self.filled == 0:
            return self
        return self.truncated(self.filled - 1)


class FractionalWeights(NamedTuple):
    """Product-integration weights for int_0^{tau_n} (tau_n - s)^{-1/2} w(s) ds.

    For piecewise-linear w the integral is sqrt(h) times
    sum_{d=0}^{n-1} c[d] w_{n-d} + endpoint[n] w_0. Column j of
    ``memory_residual[n]`` and ``trapezoid_residual[n]`` holds what the
    singular rule and the trapezoid rule miss for w = (tau / h)^sigma_j,
    sigma_j from START_EXPONENTS, in units of sqrt(h) and h.
    """

    c: np.ndarray
    endpoint: np.ndarray
    memory_residual: np.ndarray
    trapezoid_residual: np.ndarray


@lru_cache(maxsize=16)
def fractional_weights(last: int) -> FractionalWeights:
    """Weights for nodes 0..last (independent of the step size).

    On interval m (distance m steps from the evaluation node) the older
    node gets (2/3)(a + 2b)/(a + b)^2 and the newer one
    (2/3)(2a + b)/(a + b)^2 with a = sqrt(m + 1), b = sqrt(m); this form
    avoids the cancellation of the textbook expression.
    """
    if last < 1:
        raise DomainError(f"Need at least one step, got {last}")
    m = np.arange(last + 1, dtype=float)
    a = np.sqrt(m + 1.0)
    b = np.sqrt(m)
    older = (2.0 / 3.0) * (a + 2.0 * b) / (a + b) ** 2
    newer = (2.0 / 3.0) * (2.0 * a + b) / (a + b) ** 2

    c = newer.copy()
    c[1:] += older[:-1]
    endpoint = np.zeros(last + 1)
    endpoint[1:] = older[:-1]

    memory = np.zeros((last + 1, len(START_EXPONENTS)))
    trapezoid = np.zeros_like(memory)
    for j, sigma in enumerate(START_EXPONENTS):
        power = m**sigma
        exact = special.beta(0.5, sigma + 1.0) * m ** (sigma + 0.5)
        memory[:, j] = exact - fftconvolve(c, power)[: last + 1]
        trapezoid[:, j] = m ** (sigma + 1.0) / (sigma + 1.0) - (np.cumsum(power) - 0.5 * power)
    memory[0] = 0.0
    trapezoid[0] = 0.0

    for arr in (c, endpoint, memory, trapezoid):
        arr.setflags(write=False)
    logger.debug(f"Built singular-kernel weights for {last} steps")
    return FractionalWeights(c=c, endpoint=endpoint, memory_residual=memory, trapezoid_residual=trapezoid)


@lru_cache(maxsize=8)
def start_extractor(count: int) -> np.ndarray:
    """Map node values g_0..g_count to the amplitudes of the START_EXPONENTS powers.

    The values are fitted exactly by a + b k^{1/2} + c k + d k^{3/2}, keeping
    as many of these terms as there are nodes. Row j of the result applied
    to (g_0, ..., g_count) gives the coefficient of k^{sigma_j}; it is zero
    when that power does not fit.
    """
    if not 1 <= count <= START_NODES:
        raise DomainError(f"Start correction uses 1 to {START_NODES} nodes after the first, got {count}")
    exponents = (0.0, 0.5, 1.0, 1.5)[: count + 1]
    k = np.arange(count + 1, dtype=float)
    inverse = np.linalg.inv(k[:, None] ** np.array(exponents)[None, :])
    rows = np.zeros((len(START_EXPONENTS), count + 1))
    for j, sigma in enumerate(START_EXPONENTS):
        if sigma in exponents:
            rows[j] = inverse[exponents.index(sigma)]
    rows.setflags(write=False)
    return rows


class KernelWeights(NamedTuple):
    """Product-integration weights for int_0^{tau_n} psi(tau_n - s) f(s) ds.

    With f piecewise linear the integral is
    endpoint[n] f_0 + sum_{d=1}^{n-1} omega[d] f_{n-d} + omega[0] f_n.
    """

    psi: np.ndarray
    omega: np.ndarray
    endpoint: np.ndarray


@lru_cache(maxsize=16)
def kernel_weights(kappa: float, step: float, last: int, order: int = InternalConfig.gauss_order) -> KernelWeights:
    """Weights against psi_kappa on a grid of ``last`` steps.

    P_m = int psi over interval m equals phi(m h) - phi((m + 1) h) exactly;
    the first moment Q_m = int (sigma - m h)/h psi(sigma) is integrated by
    Gauss-Legendre. Interval m contributes Q_m to its older node and
    P_m - Q_m to its newer one.
    """
    if last < 1:
        raise DomainError(f"Need at least one step, got {last}")
    kernel = RelaxationKernel(kappa)
    nodes = step * np.arange(last + 1, dtype=float)
    psi_nodes = np.atleast_1d(kernel.psi(nodes))
    phi_nodes = np.atleast_1d(kernel.phi(nodes))
    P = phi_nodes[:-1] - phi_nodes[1:]

    x, wts = np.polynomial.legendre.leggauss(order)
    theta = 0.5 * (x + 1.0)
    weights = 0.5 * wts
    sigma = step * (np.arange(last, dtype=float)[:, None] + theta[None, :])
    Q = step * (np.asarray(kernel.psi(sigma)) * theta[None, :]) @ weights

    omega = np.zeros(last + 1)
    omega[:last] = P - Q
    omega[1:] += Q
    endpoint = np.zeros(last + 1)
    endpoint[1:] = Q

    for arr in (psi_nodes, omega, endpoint):
        arr.setflags(write=False)
    logger.debug(f"Built kernel weights for kappa={kappa}, step={step}, {last} steps")
    return KernelWeights(psi=psi_nodes, omega=omega, endpoint=endpoint)
