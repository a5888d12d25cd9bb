"""Tests for the velocity fields and their derived forcing terms."""

import math

import numpy as np
import pytest

from mrbasset.exceptions import CapabilityError, ConfigurationError, DomainError, OutOfDomainError
from mrbasset.flow import (
    DoubleGyre,
    FlowFactory,
    FlowField,
    FlowSample,
    QuiescentFlow,
    UniformAcceleration,
    derived_fields,
    uniform_forcing,
)
from mrbasset.params import ParticleParams

STEP = 1e-5


class _FirstOrderOnly(FlowField):
    """Solid-body rotation with first derivatives only."""

    @property
    def dimension(self) -> int:
        return 2

    def _evaluate(self, x, t, order):
        u = np.stack([-x[..., 1], x[..., 0]], axis=-1)
        grad = np.broadcast_to(np.array([[0.0, -1.0], [1.0, 0.0]]), x.shape[:-1] + (2, 2)).copy()
        return FlowSample(u=u, grad_u=grad, DuDt=np.einsum("...ij,...j->...i", grad, u))


class TestDoubleGyre:
    """Test cases for the closed-form double gyre."""

    def setup_method(self):
        self.flow = DoubleGyre()
        self.points = np.array([[0.3, 0.2], [1.1, 0.7], [1.7, 0.45]])
        self.t = 0.37

    def test_velocity_at_known_point(self):
        """Test the velocity at a point with a known value."""
        u = self.flow.velocity(np.array([1.0, 0.25]), 0.0)
        assert u[0] == pytest.approx(0.0, abs=1e-15)
        assert u[1] == pytest.approx(-0.1 * math.pi * math.sin(math.pi / 4.0), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        """Test grad u against central differences."""
        sample = self.flow.evaluate(self.points, self.t)
        for k in range(2):
            shift = np.zeros(2)
            shift[k] = STEP
            plus = self.flow.velocity(self.points + shift, self.t)
            minus = self.flow.velocity(self.points - shift, self.t)
            diff = (plus - minus) / (2 * STEP)
            np.testing.assert_allclose(sample.grad_u[..., k], diff, atol=1e-8)

    def test_divergence_free(self):
        """Test that u and lap u are divergence free."""
        sample = self.flow.evaluate(self.points, self.t, order=3)
        np.testing.assert_allclose(np.trace(sample.grad_u, axis1=-2, axis2=-1), 0.0, atol=1e-14)
        np.testing.assert_allclose(np.trace(sample.grad_lap_u, axis1=-2, axis2=-1), 0.0, atol=1e-11)

    def test_material_derivative(self):
        """Test Du/Dt against central differences."""
        sample = self.flow.evaluate(self.points, self.t)
        later = self.flow.velocity(self.points, self.t + STEP)
        earlier = self.flow.velocity(self.points, self.t - STEP)
        u_t = (later - earlier) / (2 * STEP)
        expected = u_t + np.einsum("...ij,...j->...i", sample.grad_u, sample.u)
        np.testing.assert_allclose(sample.DuDt, expected, atol=1e-8)

    def test_laplacian_blocks(self):
        """Test lap u, grad lap u and D(lap u)/Dt against differences."""
        sample = self.flow.evaluate(self.points, self.t, order=3)
        # Laplacian as the divergence of the analytic gradient
        lap = np.zeros_like(sample.u)
        for k in range(2):
            shift = np.zeros(2)
            shift[k] = STEP
            plus = self.flow.evaluate(self.points + shift, self.t).grad_u[..., k]
            minus = self.flow.evaluate(self.points - shift, self.t).grad_u[..., k]
            lap += (plus - minus) / (2 * STEP)
        np.testing.assert_allclose(sample.lap_u, lap, atol=1e-6)

        for k in range(2):
            shift = np.zeros(2)
            shift[k] = STEP
            plus = self.flow.evaluate(self.points + shift, self.t, order=3).lap_u
            minus = self.flow.evaluate(self.points - shift, self.t, order=3).lap_u
            np.testing.assert_allclose(sample.grad_lap_u[..., k], (plus - minus) / (2 * STEP), atol=1e-6)

        lap_t = (
            self.flow.evaluate(self.points, self.t + STEP, order=3).lap_u
            - self.flow.evaluate(self.points, self.t - STEP, order=3).lap_u
        ) / (2 * STEP)
        expected = lap_t + np.einsum("...ij,...j->...i", sample.grad_lap_u, sample.u)
        np.testing.assert_allclose(sample.DlapuDt, expected, atol=1e-6)

    def test_first_order_request_skips_laplacian(self):
        """Test that first-order samples leave the Laplacian blocks empty."""
        sample = self.flow.evaluate(self.points, self.t)
        assert sample.lap_u is None and sample.grad_lap_u is None

    def test_out_of_domain(self):
        """Test the out-of-domain error and its non-strict bypass."""
        with pytest.raises(OutOfDomainError) as info:
            self.flow.evaluate(np.array([[1.0, 0.5], [2.5, 0.5]]), 0.0)
        assert info.value.coordinate == (2.5, 0.5)
        self.flow.evaluate(np.array([2.5, 0.5]), 0.0, strict=False)

    def test_invalid_requests(self):
        """Test that unsupported orders, dimensions and frequencies are rejected."""
        with pytest.raises(DomainError):
            self.flow.evaluate(self.points, 0.0, order=2)
        with pytest.raises(DomainError):
            self.flow.evaluate(np.array([1.0, 0.5, 0.0]), 0.0)
        with pytest.raises(DomainError):
            DoubleGyre(omega=0.0)

    def test_period(self):
        """Test the period of the time-dependent gyre."""
        assert self.flow.period == pytest.approx(2.0)
        np.testing.assert_allclose(
            self.flow.velocity(self.points, self.t), self.flow.velocity(self.points, self.t + 2.0), atol=1e-14
        )


class TestFlowFactory:
    """Test cases for flow creation by name."""

    def test_create_flows(self):
        """Test flow creation by name."""
        assert isinstance(FlowFactory.create_flow("double_gyre"), DoubleGyre)
        assert isinstance(FlowFactory.create_flow("quiescent", dimension=3), QuiescentFlow)
        assert isinstance(FlowFactory.create_flow("uniform_acceleration", acceleration=(1.0, 0.0)), UniformAcceleration)
        with pytest.raises(ConfigurationError):
            FlowFactory.create_flow("taylor_green")

    def test_description_round_trip(self):
        """Test that descriptions recreate the same flows."""
        for flow in (DoubleGyre(A=0.2, alpha=0.1), QuiescentFlow(3), UniformAcceleration((1.0, -2.0))):
            assert FlowFactory.from_description(flow.describe()).describe() == flow.describe()

    def test_available_flows(self):
        """Test the registry listing."""
        assert "double_gyre" in FlowFactory.get_available_flows()


class TestDerivedFields:
    """Test cases for A_u, B_u and M_u."""

    def setup_method(self):
        self.flow = DoubleGyre()
        self.params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)
        self.points = np.array([[0.3, 0.2], [1.1, 0.7]])

    def test_without_faxen(self):
        """Test A_u, M_u and B_u without Faxen terms."""
        fields = derived_fields(self.flow, self.params)
        sample = fields.evaluate(self.points, 0.4)
        flow = self.flow.evaluate(self.points, 0.4)
        np.testing.assert_array_equal(sample.A, flow.u)
        np.testing.assert_array_equal(sample.M, flow.grad_u)
        np.testing.assert_allclose(sample.B, 0.5 * flow.DuDt)

    def test_neutral_buoyancy_removes_forcing(self):
        """Test that R = 2/3 removes B_u."""
        params = ParticleParams.from_dimensionless(2.0 / 3.0, 0.01, 1.0)
        sample = derived_fields(self.flow, params).evaluate(self.points, 0.4)
        assert np.all(sample.B == 0.0)

    def test_faxen_terms(self):
        """Test the Faxen corrections of A_u and M_u."""
        fields = derived_fields(self.flow, self.params, faxen=True)
        sample = fields.evaluate(self.points, 0.4)
        flow = self.flow.evaluate(self.points, 0.4, order=3)
        c = self.params.faxen_coefficient
        np.testing.assert_allclose(sample.A, flow.u + c * flow.lap_u)
        np.testing.assert_allclose(sample.M, flow.grad_u + c * flow.grad_lap_u)

    def test_faxen_needs_third_order(self):
        """Test that Faxen terms need third derivatives."""
        with pytest.raises(CapabilityError):
            derived_fields(_FirstOrderOnly(), self.params, faxen=True)
        derived_fields(_FirstOrderOnly(), self.params)

    def test_gravity_dimension_mismatch(self):
        """Test that a 3D gravity vector is rejected in a 2D flow."""
        params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0, (0.0, 0.0, -1.0))
        with pytest.raises(DomainError):
            derived_fields(self.flow, params)

    def test_uniform_forcing(self):
        """Test detection of a constant forcing."""
        fields = derived_fields(UniformAcceleration((1.0, -2.0)), self.params)
        np.testing.assert_allclose(uniform_forcing(fields), [0.5, -1.0])
        assert uniform_forcing(derived_fields(self.flow, self.params)) is None
