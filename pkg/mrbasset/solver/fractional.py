"""Direct discretization of the half-order derivative.

Integrating w' + kappa d^{1/2} w + w = eps f once gives

    w(tau) - w0 + kappa I^{1/2} w(tau) + int_0^tau w = eps int_0^tau f,

with I^{1/2} w = pi^{-1/2} int_0^tau (tau - s)^{-1/2} w(s) ds. The singular
integral uses product-integration weights (exact for piecewise-linear w),
the regular ones the trapezoid rule. Near tau = 0, w expands in powers of
sqrt(tau); both rules carry a starting correction fitted on nodes 0..3 that
makes them exact for sqrt(tau) and tau^{3/2} as well, and nodes 1..3 are
solved together.
"""

import logging
import math

import numpy as np

from ..exceptions import BlowUpError, StepFailureError
from .base import SolverBackend
from .history import START_NODES, HistoryBuffer, fractional_weights, start_extractor

logger = logging.getLogger(__name__)


class FractionalDirectBackend(SolverBackend):
    """Semi-implicit product-integration scheme for the differential form."""

    name = "fractional_direct"

    def prepare(self, last: int) -> None:
        self._weights = fractional_weights(last)
        self._c_rev = np.ascontiguousarray(self._weights.c[::-1])
        self._last = last
        self._root_h = math.sqrt(self.step)
        self._memory = self.kappa / math.sqrt(math.pi)
        self._corrected = self.kappa > 0.0
        self._diag = 1.0 + self._memory * self._root_h * self._weights.c[0] + 0.5 * self.step
        self._eye = None

    def _memory_history(self, w: np.ndarray, n: int) -> np.ndarray:
        """sum_{d=1}^{n-1} c_d w_{n-d} + endpoint_n w_0."""
        window = self._c_rev[self._last - n + 1 : self._last]
        return window @ w[1:n] + self._weights.endpoint[n] * w[0]

    def _rhs(self, n, w0, f0, memory_history, sum_w, sum_f, amp_w, amp_f) -> np.ndarray:
        """Explicit part of the node-n equation; ``amp_*`` are start-correction amplitudes."""
        h = self.step
        r = self._weights.memory_residual[n]
        q = self._weights.trapezoid_residual[n]
        rhs = w0 - self._memory * self._root_h * (memory_history + r @ amp_w) - h * (0.5 * w0 + sum_w + q @ amp_w)
        return rhs + self.eps * h * (0.5 * f0 + sum_f + q @ amp_f)

    def _solve(self, sample, rhs: np.ndarray) -> np.ndarray:
        half = 0.5 * self.eps * self.step
        if self._eye is None or self._eye.shape[0] != rhs.shape[0]:
            self._eye = np.eye(rhs.shape[0])
        return np.linalg.solve(self._diag * self._eye + half * sample.M, rhs + half * sample.B)

    def advance(self, buf: HistoryBuffer, n: int, last: int) -> int:
        if self._corrected and n <= START_NODES:
            end = min(START_NODES, last)
            self._advance_start_block(buf, n, end)
            return end - n + 1

        w0, f0 = buf.w[0], buf.f[0]
        if self._corrected:
            extractor = start_extractor(START_NODES)
            amp_w = extractor @ buf.w[: START_NODES + 1]
            amp_f = extractor @ buf.f[: START_NODES + 1]
        else:
            amp_w = amp_f = np.zeros((len(self._weights.memory_residual[n]), w0.shape[0]))
        rhs = self._rhs(n, w0, f0, self._memory_history(buf.w, n), buf.sum_w[n - 1], buf.sum_f[n - 1], amp_w, amp_f)
        w, y, sample = self.close_node(buf, n, lambda s, _: self._solve(s, rhs))
        self.store(buf, n, w, y, sample)
        return 1

    def _advance_start_block(self, buf: HistoryBuffer, first: int, end: int) -> None:
        """Solve nodes first..end together by Gauss-Seidel sweeps.

        A fresh run solves nodes 1..3 here; a run restarted inside the start
        region solves only the nodes it is missing, and a grid with fewer
        than three steps fits as many start terms as it has nodes.
        """
        h, eps = self.step, self.eps
        tol = self.config.picard_tol
        extractor = start_extractor(end)
        count = end - first + 1
        w = np.concatenate([buf.w[:first], np.repeat(buf.w[first - 1][None, :], count, axis=0)])
        f = np.concatenate([buf.f[:first], np.repeat(buf.f[first - 1][None, :], count, axis=0)])
        y = np.repeat(buf.y[first - 1][None, :], count + 1, axis=0)
        for i in range(1, count + 1):
            y[i] = y[i - 1] + eps * h * buf.g[first - 1]
        w0, f0 = buf.w[0], buf.f[0]
        samples = [None] * count

        for sweep in range(1, self.config.picard_max_iters + 1):
            change = 0.0
            sum_w, sum_f = buf.sum_w[first - 1].copy(), buf.sum_f[first - 1].copy()
            y_prev, g_prev = buf.y[first - 1], buf.g[first - 1]
            for i, n in enumerate(range(first, end + 1)):
                sample = self.sample(y[i + 1], buf.time(n))
                rhs = self._rhs(n, w0, f0, self._memory_history(w, n), sum_w, sum_f, extractor @ w, extractor @ f)
                w_new = self._solve(sample, rhs)
                g_new = w_new + sample.A
                y_new = y_prev + 0.5 * eps * h * (g_prev + g_new)
                if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(y_new))):
                    raise BlowUpError(first)
                change = max(
                    change,
                    np.linalg.norm(w_new - w[n]) / (1.0 + np.linalg.norm(w_new)),
                    np.linalg.norm(y_new - y[i + 1]) / (1.0 + np.linalg.norm(y_new)),
                )
                samples[i] = (y[i + 1].copy(), sample)
                w[n] = w_new
                f[n] = -sample.M @ w_new + sample.B
                y[i + 1] = y_new
                sum_w += w_new
                sum_f += f[n]
                y_prev, g_prev = y_new, g_new
            if sweep > 1 and change <= tol:
                logger.debug(f"Start block {first}..{end} converged after {sweep} sweeps")
                for i, n in enumerate(range(first, end + 1)):
                    position, sample = samples[i]
                    self.store(buf, n, w[n], position, sample)
                return

        raise StepFailureError(first, f"Start block did not converge in {self.config.picard_max_iters} sweeps")
