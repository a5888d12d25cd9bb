"""Variation-of-constants integrator.

Advances the mild form w(tau) = psi(tau) w0 + eps int_0^tau psi(tau - s) f(s) ds
with f = -M_u w + B_u, using product integration of psi against the
piecewise-linear interpolant of f.
"""

import logging

import numpy as np

from .base import SolverBackend
from .history import HistoryBuffer, kernel_weights

logger = logging.getLogger(__name__)


class MildVolterraBackend(SolverBackend):
    """Product-integration scheme for the integral form."""

    name = "mild_volterra"

    def prepare(self, last: int) -> None:
        self._weights = kernel_weights(float(self.kappa), float(self.step), last)
        self._omega_rev = np.ascontiguousarray(self._weights.omega[::-1])
        self._last = last

    def advance(self, buf: HistoryBuffer, n: int, last: int) -> int:
        weights = self._weights
        window = self._omega_rev[self._last - n + 1 : self._last]
        history = window @ buf.f[1:n] + weights.endpoint[n] * buf.f[0]
        base = weights.psi[n] * buf.w[0] + self.eps * history
        implicit = self.eps * weights.omega[0]
        eye = np.eye(buf.dimension)

        def solve(sample, _):
            return np.linalg.solve(eye + implicit * sample.M, base + implicit * sample.B)

        w, y, sample = self.close_node(buf, n, solve)
        self.store(buf, n, w, y, sample)
        return 1
