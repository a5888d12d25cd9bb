"""Tests for convolution powers, envelope curves and their certificates."""

import math

import numpy as np
import pytest

from mrbasset.envelope import (
    asymptotic_bound,
    check_domination,
    continuation_window,
    convolution_series,
    discrete_convolution,
    envelope_at,
    envelope_curve,
    envelope_limit,
    fit_loglog_slope,
    frozen_envelope_check,
    sup_bound,
)
from mrbasset.exceptions import CapabilityError, DomainError
from mrbasset.flow import DoubleGyre, FieldBounds, QuiescentFlow, derived_fields, estimate_bounds
from mrbasset.params import ParticleParams
from mrbasset.relaxation import RelaxationKernel, inverse_laplace_oracle, uniform_grid
from mrbasset.solver import SolverConfig, simulate

GYRE_L_M = math.sqrt(2.0) * math.pi**2 * 0.1 * 1.02


def _params(R: float) -> ParticleParams:
    return ParticleParams.from_dimensionless(R, 0.01 * R, 1.0)


class TestConvolutionSeries:
    """Test cases for psi^{*j} on a grid."""

    def setup_method(self):
        self.kernel = RelaxationKernel(math.sqrt(4.5))
        self.grid = uniform_grid(0.005, 10.0)

    def test_second_power_matches_inverse_transform(self):
        """Test psi * psi against the inverted squared transform."""
        series = convolution_series(self.kernel, 0.5, self.grid, terms=2)
        tau = np.array([1.0, 2.0, 5.0])
        index = np.rint(tau / 0.005).astype(int)
        exact = inverse_laplace_oracle(lambda s: self.kernel.transform(s) ** 2, tau)
        np.testing.assert_allclose(series.powers[1][index], exact, atol=2e-3)

    def test_discrete_convolution_of_constants(self):
        """Test the discrete convolution of two constants."""
        ones = np.ones(11)
        result = discrete_convolution(ones, ones, 0.1)
        np.testing.assert_allclose(result, 0.1 * np.arange(11), atol=1e-12)
        assert result[0] == 0.0

    def test_truncation_order(self):
        """Test the number of terms chosen for a tolerance."""
        series = convolution_series(self.kernel, 0.01 * GYRE_L_M, self.grid, tol=1e-6)
        assert series.terms == 4
        assert series.truncation_bound < 1e-6
        assert convolution_series(self.kernel, 0.0, self.grid).terms == 1

    def test_powers_stay_in_unit_interval(self):
        """Test that every convolution power lies in [0, 1]."""
        series = convolution_series(self.kernel, 0.5, self.grid, terms=4)
        for power in series.powers:
            assert np.all(power >= 0.0) and np.all(power <= 1.0)
        for power in series.powers[1:]:
            assert power[0] == 0.0

    def test_contraction_required(self):
        """Test that the series needs eps L_M < 1 and at least one term."""
        with pytest.raises(DomainError):
            convolution_series(self.kernel, 1.0, self.grid)
        with pytest.raises(DomainError):
            convolution_series(self.kernel, 0.5, self.grid, terms=0)

    def test_integral_of_h(self):
        """Test the integral of h against its analytic bounds."""
        grid = uniform_grid(0.05, 1000.0)
        eps_lm = 0.01 * GYRE_L_M
        series = convolution_series(self.kernel, eps_lm, grid)
        integral = series.integral_of_h()
        assert integral <= eps_lm / (1.0 - eps_lm)
        assert integral >= 0.9 * eps_lm * (1.0 - self.kernel.phi(1000.0))


class TestEnvelopeCurve:
    """Test cases for the envelope and its limits."""

    def setup_method(self):
        self.params = _params(1.0)
        self.bounds = FieldBounds.given(L_A=0.3204, L_B=0.1207, L_M=GYRE_L_M, L_c=3.0, R=1.0)
        self.w0_norm = math.hypot(10.0, 10.0)
        self.grid = uniform_grid(0.01, 50.0)

    def test_starts_at_initial_speed(self):
        """Test that the envelope starts at |w0|."""
        curve = envelope_curve(self.params, self.bounds, self.w0_norm, self.grid)
        assert curve.values[0] == pytest.approx(self.w0_norm, rel=1e-15)
        assert curve.terms == 4
        assert curve.certificate == pytest.approx(self.w0_norm * curve.truncation_bound)

    def test_constant_term(self):
        """Test the eps^2 constant term."""
        with_eps2 = envelope_curve(self.params, self.bounds, self.w0_norm, self.grid, omit_eps2=False)
        without = envelope_curve(self.params, self.bounds, self.w0_norm, self.grid)
        eps_lm = self.params.eps * self.bounds.L_M
        expected = self.params.eps * eps_lm * self.bounds.L_B / (1.0 - eps_lm)
        assert with_eps2.const_part == pytest.approx(expected, rel=1e-12)
        np.testing.assert_allclose(with_eps2.values - without.values, expected, rtol=0, atol=1e-12)

    def test_limits(self):
        """Test the asymptotic bound, the envelope limit and the uniform bound."""
        assert asymptotic_bound(self.params, self.bounds) == pytest.approx(1.2244e-3, rel=1e-3)
        assert envelope_limit(self.params, self.bounds) == pytest.approx(0.01 * 0.1207)
        assert envelope_limit(self.params, self.bounds, omit_eps2=False) == asymptotic_bound(self.params, self.bounds)
        expected = (self.w0_norm + 0.01 * 0.1207) / (1.0 - 0.01 * GYRE_L_M)
        assert sup_bound(self.params, self.bounds, self.w0_norm) == pytest.approx(expected)

    def test_large_time_form(self):
        """Test the large-time envelope against the limit and the computed curve."""
        limit = envelope_limit(self.params, self.bounds)
        assert envelope_at(self.params, self.bounds, self.w0_norm, 1e8) == pytest.approx(limit, rel=1e-3)
        curve = envelope_curve(self.params, self.bounds, self.w0_norm, self.grid)
        assert envelope_at(self.params, self.bounds, self.w0_norm, 50.0) == pytest.approx(curve.values[-1], rel=0.05)

    def test_neutral_buoyancy_decays_like_psi(self):
        """Test the tau^{-3/2} decay at neutral buoyancy."""
        params = _params(2.0 / 3.0)
        bounds = FieldBounds.given(L_A=0.3204, L_B=0.0, L_M=GYRE_L_M, R=2.0 / 3.0)
        curve = envelope_curve(params, bounds, self.w0_norm, uniform_grid(0.05, 1000.0))
        assert np.all(curve.phi_part == 0.0)
        slope = fit_loglog_slope(curve.tau, curve.values, (100.0, 1000.0))
        assert slope == pytest.approx(-1.5, abs=0.05)

    def test_contraction_required(self):
        """Test that a non-contracting ratio is rejected."""
        bounds = FieldBounds.given(L_A=1.0, L_B=1.0, L_M=150.0)
        with pytest.raises(DomainError):
            envelope_curve(self.params, bounds, self.w0_norm, self.grid)
        with pytest.raises(DomainError):
            asymptotic_bound(self.params, bounds)

    def test_table(self):
        """Test the envelope table columns."""
        table = envelope_curve(self.params, self.bounds, self.w0_norm, self.grid).to_dataframe()
        assert list(table.columns) == ["tau", "envelope", "series_part", "phi_part", "const_part", "truncation_bound"]
        assert len(table) == len(self.grid)


class TestContinuationWindow:
    """Test cases for the continuation certificate."""

    def setup_method(self):
        self.params = _params(1.0)
        self.bounds = FieldBounds.given(L_A=0.3204, L_B=0.1207, L_M=GYRE_L_M, L_c=3.0, R=1.0)

    def test_window_formula(self):
        """Test the continuation window against its closed form."""
        w0_norm = 2.0
        cert = continuation_window(self.params, self.bounds, w0_norm)
        k_prime = sup_bound(self.params, self.bounds, w0_norm)
        eps = self.params.eps
        expected = 0.5 * min(1.0 / (eps * (GYRE_L_M + 1.0)), 1.0 / (2.0 * eps * (9.0 + GYRE_L_M + 3.0 * k_prime)))
        assert cert.h == pytest.approx(expected)
        assert cert.k_prime == pytest.approx(k_prime)
        assert cert.K > cert.k_prime
        assert cert.h_physical == pytest.approx(eps * cert.h)
        assert cert.to_dict()["h_physical"] == pytest.approx(cert.h_physical)

    def test_window_shrinks_with_speed(self):
        """Test that a faster start gives a shorter window."""
        slow = continuation_window(self.params, self.bounds, 1.0)
        fast = continuation_window(self.params, self.bounds, 100.0)
        assert fast.h < slow.h

    def test_needs_lipschitz_constant(self):
        """Test that the window needs the Lipschitz constant."""
        bounds = FieldBounds.given(L_A=0.3204, L_B=0.1207, L_M=GYRE_L_M)
        with pytest.raises(CapabilityError):
            continuation_window(self.params, bounds, 1.0)


class TestSlopeFit:
    """Test cases for log-log slope fitting."""

    def test_power_law(self):
        """Test the fitted slope of an exact power law."""
        tau = np.logspace(0, 4, 100)
        assert fit_loglog_slope(tau, 3.0 * tau**-1.5, (10.0, 1000.0)) == pytest.approx(-1.5)

    def test_too_few_points(self):
        """Test that a fit window with too few points is rejected."""
        tau = np.array([1.0, 2.0, 3.0])
        with pytest.raises(DomainError):
            fit_loglog_slope(tau, tau, (2.5, 10.0))


class TestDomination:
    """Test cases for checking trajectories against an envelope."""

    def setup_method(self):
        self.params = _params(1.0)
        fields = derived_fields(QuiescentFlow(), self.params)
        config = SolverConfig(backend="mild_volterra", dt=0.01, tau_end=5.0)
        self.record = simulate(fields, self.params, [1.0, 0.5], [3.0, -4.0], config)
        self.bounds = FieldBounds.given(L_A=0.0, L_B=0.0, L_M=0.0)

    def test_frozen_run_is_dominated(self):
        """Test that a frozen-field run sits exactly on its envelope."""
        curve = envelope_curve(self.params, self.bounds, 5.0, self.record.tau)
        report = check_domination(self.record, curve)
        assert report.dominated
        assert report.first_violation_tau is None
        assert report.worst_ratio == pytest.approx(1.0, rel=1e-9)

    def test_undersized_envelope_is_violated(self):
        """Test that a halved envelope is violated at every node."""
        curve = envelope_curve(self.params, self.bounds, 2.5, self.record.tau)
        report = check_domination(self.record, curve)
        assert not report.dominated
        assert report.violations == len(self.record)
        assert report.first_violation_tau == 0.0
        assert report.worst_ratio == pytest.approx(2.0, rel=1e-9)

    def test_grid_mismatch(self):
        """Test that mismatched grids are rejected."""
        curve = envelope_curve(self.params, self.bounds, 5.0, uniform_grid(0.01, 2.0))
        with pytest.raises(DomainError):
            check_domination(self.record, curve)

    def test_frozen_envelope_check(self):
        """Test the frozen-field envelope |w0| psi."""
        envelope, psi = frozen_envelope_check(5.0, RelaxationKernel(self.params.kappa), self.record.tau)
        np.testing.assert_allclose(self.record.speed(), envelope, rtol=1e-12)
        assert psi[0] == 1.0


class TestDoubleGyreDomination:
    """Test cases for the envelope against trajectories in the double gyre."""

    w0 = np.array([10.0, 10.0])

    @pytest.mark.parametrize("backend", ["fractional_direct", "mild_volterra"])
    @pytest.mark.parametrize("R", [1.0 / 3.0, 2.0 / 3.0, 1.0])
    def test_trajectory_stays_below_envelope(self, R, backend):
        """Test |w| <= E(tau) at every node and sup |w| <= the uniform bound."""
        params = _params(R)
        fields = derived_fields(DoubleGyre(), params)
        bounds = estimate_bounds(fields, grid=(201, 101, 16), show_progress=False)
        config = SolverConfig(backend=backend, dt=0.005, tau_end=2.0)
        record = simulate(fields, params, (0.6, 0.4), self.w0, config)
        w0_norm = float(np.linalg.norm(self.w0))

        curve = envelope_curve(params, bounds, w0_norm, record.tau)
        report = check_domination(record, curve)
        assert report.violations == 0
        assert np.max(record.speed()) <= sup_bound(params, bounds, w0_norm)
