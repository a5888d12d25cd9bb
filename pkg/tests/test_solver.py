"""Tests for the two solver backends and trajectory records."""

import math

import numpy as np
import pandas as pd
import pytest

from mrbasset.config import VerifySection
from mrbasset.exceptions import ConfigurationError, DomainError, StepFailureError
from mrbasset.flow import DoubleGyre, QuiescentFlow, UniformAcceleration, derived_fields
from mrbasset.params import ParticleParams
from mrbasset.relaxation import RelaxationKernel
from mrbasset.solver import (
    BackendFactory,
    FractionalDirectBackend,
    HistoryBuffer,
    MildVolterraBackend,
    SolverConfig,
    convergence_study,
    fractional_weights,
    kernel_weights,
    load_checkpoint,
    recover_particle_velocity,
    save_checkpoint,
    simulate,
)
from mrbasset.solver.history import START_EXPONENTS, start_extractor


def _run(flow, params, backend, dt=0.01, tau_end=5.0, y0=(0.5, 0.5), w0=(1.0, 1.0), **changes):
    config = SolverConfig(backend=backend, dt=dt, tau_end=tau_end, **changes)
    return simulate(derived_fields(flow, params), params, y0, w0, config)


class TestWeights:
    """Test cases for the quadrature weight tables."""

    def test_fractional_weights_integrate_constants(self):
        """Test that the singular weights integrate constants exactly."""
        weights = fractional_weights(200)
        for n in (1, 2, 7, 50, 200):
            total = weights.c[:n].sum() + weights.endpoint[n]
            assert total == pytest.approx(2.0 * math.sqrt(n), rel=1e-12)

    def test_fractional_weights_are_step_free_and_read_only(self):
        """Test that the singular weights are read-only and independent of the step."""
        weights = fractional_weights(10)
        assert weights.c[0] == pytest.approx(4.0 / 3.0)
        assert weights.endpoint[0] == 0.0
        with pytest.raises(ValueError):
            weights.c[0] = 1.0
        with pytest.raises(DomainError):
            fractional_weights(0)

    def test_start_extractor_recovers_amplitudes(self):
        """Test that the fitted amplitudes of sqrt(k) and k^{3/2} are exact on four nodes."""
        k = np.arange(4, dtype=float)
        g = 0.7 - 1.3 * np.sqrt(k) + 2.1 * k + 0.4 * k**1.5
        np.testing.assert_allclose(start_extractor(3) @ g, [-1.3, 0.4], atol=1e-12)
        three = g[:3] - 0.4 * k[:3] ** 1.5
        np.testing.assert_allclose(start_extractor(2) @ three, [-1.3, 0.0], atol=1e-12)
        with pytest.raises(DomainError):
            start_extractor(4)

    def test_residuals_close_the_rules_on_powers(self):
        """Test that rule plus residual integrates k^sigma exactly for both start powers."""
        weights = fractional_weights(50)
        for n in (1, 3, 17, 50):
            d = np.arange(n)
            for j, sigma in enumerate(START_EXPONENTS):
                exact = math.gamma(0.5) * math.gamma(sigma + 1.0) / math.gamma(sigma + 1.5) * n ** (sigma + 0.5)
                rule = weights.c[:n] @ (n - d) ** sigma
                assert rule + weights.memory_residual[n, j] == pytest.approx(exact, rel=1e-10)
                trapezoid = np.sum(np.arange(1, n + 1) ** sigma) - 0.5 * n**sigma
                total = trapezoid + weights.trapezoid_residual[n, j]
                assert total == pytest.approx(n ** (sigma + 1.0) / (sigma + 1.0), rel=1e-10)

    def test_kernel_weights_integrate_constants(self):
        """Test that the kernel weights integrate constants exactly."""
        step = 0.1
        weights = kernel_weights(1.5, step, 100)
        phi = np.asarray(RelaxationKernel(1.5).phi(step * np.arange(101)))
        for n in (1, 2, 10, 100):
            total = weights.omega[:n].sum() + weights.endpoint[n]
            assert total == pytest.approx(1.0 - phi[n], rel=1e-12)
        assert weights.psi[0] == 1.0
        with pytest.raises(ValueError):
            weights.omega[0] = 0.0

    def test_kernel_weights_prefix_stable(self):
        """Test that a longer table extends a shorter one."""
        short = kernel_weights(2.0, 0.05, 40)
        long = kernel_weights(2.0, 0.05, 80)
        np.testing.assert_allclose(short.omega[:40], long.omega[:40], rtol=1e-13)
        np.testing.assert_allclose(short.endpoint, long.endpoint[:41], rtol=1e-13)


class TestHistoryBuffer:
    """Test cases for node storage."""

    def setup_method(self):
        self.buf = HistoryBuffer.allocate(0.1, 3, 2, t0=1.0, eps=0.01)

    def test_store_in_order(self):
        """Test in-order storage and the running sums."""
        ones = np.ones(2)
        self.buf.store(0, ones, ones, ones, ones)
        self.buf.store(1, 2 * ones, ones, 3 * ones, ones)
        assert self.buf.filled == 2
        np.testing.assert_array_equal(self.buf.sum_w[1], 2 * ones)
        np.testing.assert_array_equal(self.buf.sum_f[1], 3 * ones)
        assert self.buf.time(1) == pytest.approx(1.0 + 0.01 * 0.1)
        with pytest.raises(DomainError):
            self.buf.store(3, ones, ones, ones, ones)

    def test_truncate_and_grow(self):
        """Test truncation and growth of the buffer."""
        ones = np.ones(2)
        for n in range(3):
            self.buf.store(n, n * ones, ones, ones, ones)
        short = self.buf.truncated(1)
        assert short.filled == 2 and short.capacity == 1
        short.ensure_capacity(5)
        assert short.capacity == 5
        with pytest.raises(DomainError):
            self.buf.truncated(3)


class TestSolverConfig:
    """Test cases for solver settings."""

    def test_steps(self):
        """Test the step count."""
        assert SolverConfig(dt=0.01, tau_end=5.0).steps == 500

    @pytest.mark.parametrize(
        "changes",
        [
            {"backend": "rk4"},
            {"dt": -0.1},
            {"dt": 0.1, "tau_end": 0.01},
            {"picard_tol": 0.0},
            {"picard_max_iters": 0},
            {"dt": 1e-3, "tau_end": 100.0, "max_nodes": 10},
        ],
    )
    def test_invalid_settings(self, changes):
        """Test that invalid settings are rejected."""
        with pytest.raises(DomainError):
            SolverConfig(**changes).validate()

    def test_tolerance_scales_with_speed(self):
        """Test the tolerance scaling with the initial speed."""
        config = SolverConfig(picard_tol=1e-10)
        assert config.tolerance(0.5) == 1e-10
        assert config.tolerance(20.0) == pytest.approx(2e-9)


class TestBackendFactory:
    """Test cases for backend creation."""

    def setup_method(self):
        params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)
        self.fields = derived_fields(DoubleGyre(), params)

    def test_create_backends(self):
        """Test backend creation by name."""
        config = SolverConfig()
        direct = BackendFactory.create_backend("fractional_direct", self.fields, config)
        mild = BackendFactory.create_backend("Mild_Volterra", self.fields, config)
        assert isinstance(direct, FractionalDirectBackend)
        assert isinstance(mild, MildVolterraBackend)
        with pytest.raises(DomainError):
            BackendFactory.create_backend("rk4", self.fields, config)
        assert BackendFactory.get_available_backends() == ["fractional_direct", "mild_volterra"]


class TestFrozenField:
    """Test cases with M_u = B_u = 0, where w = psi w0 exactly."""

    def setup_method(self):
        self.flow = QuiescentFlow()
        self.w0 = np.array([3.0, -4.0])

    @pytest.mark.parametrize("kappa", [0.5, math.sqrt(3.0), 2.0, 2.5])
    def test_fractional_backend(self, kappa):
        """Test the direct scheme against psi w0."""
        params = ParticleParams.synthetic_mode(kappa)
        record = _run(self.flow, params, "fractional_direct", w0=self.w0)
        exact = np.asarray(RelaxationKernel(kappa).psi(record.tau))[:, None] * self.w0
        assert np.max(np.abs(record.w - exact)) <= 5e-3 * 5.0

    @pytest.mark.parametrize("kappa", [0.5, 2.0, 2.5])
    def test_mild_backend_is_exact(self, kappa):
        """Test that the mild scheme reproduces psi w0."""
        params = ParticleParams.synthetic_mode(kappa)
        record = _run(self.flow, params, "mild_volterra", w0=self.w0)
        exact = np.asarray(RelaxationKernel(kappa).psi(record.tau))[:, None] * self.w0
        np.testing.assert_allclose(record.w, exact, atol=1e-12)

    @pytest.mark.parametrize("kappa", [0.5, math.sqrt(3.0), 2.0, 2.5])
    def test_observed_order_on_verify_schedule(self, kappa):
        """Test that the direct scheme converges at order >= 1.5 on the verify step schedule."""
        params = ParticleParams.synthetic_mode(kappa)
        fields = derived_fields(self.flow, params)
        dts = VerifySection().convergence_dts
        report = convergence_study(
            fields, params, (0.5, 0.5), self.w0, dts, tau_end=20.0, backends=["fractional_direct"]
        )
        assert report.reference == "closed_form"
        assert not report.inconclusive["fractional_direct"]
        assert report.observed_order("fractional_direct") >= 1.5

    @pytest.mark.parametrize("tau_end", [0.01, 0.02, 0.03, 0.05])
    def test_grids_shorter_than_the_start_block(self, tau_end):
        """Test runs with one to five steps through the start correction."""
        params = ParticleParams.synthetic_mode(2.0)
        record = _run(self.flow, params, "fractional_direct", tau_end=tau_end, w0=self.w0)
        exact = np.asarray(RelaxationKernel(2.0).psi(record.tau))[:, None] * self.w0
        assert len(record) == round(tau_end / 0.01) + 1
        assert np.max(np.abs(record.w - exact)) <= 5e-3 * 5.0

    def test_memoryless_limit(self):
        """Test both backends at kappa = 0."""
        params = ParticleParams.synthetic_mode(0.0)
        for backend in ("fractional_direct", "mild_volterra"):
            record = _run(self.flow, params, backend, w0=self.w0)
            exact = np.exp(-record.tau)[:, None] * self.w0
            assert np.max(np.abs(record.w - exact)) <= 1e-5 * 5.0


class TestUniformForcing:
    """Test cases with constant B_u and M_u = 0."""

    def setup_method(self):
        self.flow = UniformAcceleration((0.5, -1.0))
        self.params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)
        self.w0 = np.array([1.0, 0.0])

    def _exact(self, tau):
        kernel = RelaxationKernel(self.params.kappa)
        B = 0.5 * np.array([0.5, -1.0])
        psi = np.asarray(kernel.psi(tau))[:, None]
        phi = np.asarray(kernel.phi(tau))[:, None]
        return psi * self.w0 + self.params.eps * (1.0 - phi) * B

    def test_mild_closed_form(self):
        """Test the mild scheme against the closed form."""
        record = _run(self.flow, self.params, "mild_volterra", w0=self.w0)
        np.testing.assert_allclose(record.w, self._exact(record.tau), atol=1e-10)

    def test_fractional_closed_form(self):
        """Test the direct scheme against the closed form."""
        record = _run(self.flow, self.params, "fractional_direct", w0=self.w0)
        assert np.max(np.abs(record.w - self._exact(record.tau))) <= 5e-3

    def test_convergence_order(self):
        """Test the observed order under constant forcing."""
        fields = derived_fields(self.flow, self.params)
        report = convergence_study(
            fields, self.params, (0.0, 0.0), self.w0, [0.04, 0.02, 0.01], tau_end=5.0, backends=["fractional_direct"]
        )
        assert report.reference == "closed_form"
        assert not report.inconclusive["fractional_direct"]
        assert report.observed_order("fractional_direct") > 1.3
        assert "orders" in report.to_dict()

    def test_convergence_study_rejects_bad_steps(self):
        """Test that too few or non-halving steps are rejected."""
        fields = derived_fields(self.flow, self.params)
        with pytest.raises(DomainError):
            convergence_study(fields, self.params, (0.0, 0.0), self.w0, [0.04, 0.02])
        with pytest.raises(DomainError):
            convergence_study(fields, self.params, (0.0, 0.0), self.w0, [0.04, 0.02, 0.015])


class TestDoubleGyreRuns:
    """Test cases on the double gyre."""

    def setup_method(self):
        self.flow = DoubleGyre()
        self.params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)

    def test_backends_agree(self):
        """Test that both backends agree in the double gyre."""
        direct = _run(self.flow, self.params, "fractional_direct")
        mild = _run(self.flow, self.params, "mild_volterra")
        assert np.max(np.abs(direct.w - mild.w)) <= 1e-2 * math.sqrt(2.0)
        np.testing.assert_allclose(direct.y, mild.y, atol=1e-3)

    def test_deterministic(self):
        """Test that repeated runs are identical."""
        first = _run(self.flow, self.params, "fractional_direct", tau_end=2.0)
        second = _run(self.flow, self.params, "fractional_direct", tau_end=2.0)
        np.testing.assert_array_equal(first.w, second.w)
        np.testing.assert_array_equal(first.y, second.y)

    def test_positions_follow_trapezoid_rule(self):
        """Test that positions follow the trapezoid rule."""
        record = _run(self.flow, self.params, "fractional_direct", tau_end=2.0)
        g = record.history.g
        expected = 0.5 * self.params.eps * 0.01 * (g[:-1] + g[1:])
        np.testing.assert_allclose(np.diff(record.y, axis=0), expected, atol=1e-9)

    def test_particle_velocity(self):
        """Test v = w + u and its recovery."""
        record = _run(self.flow, self.params, "mild_volterra", tau_end=1.0)
        u = self.flow.velocity(record.y, record.t_phys, strict=False)
        np.testing.assert_allclose(record.v, record.w + u, atol=1e-14)
        np.testing.assert_allclose(recover_particle_velocity(record), record.v, atol=1e-14)

    def test_backends_agree_with_faxen(self):
        """Test both backends with the Faxen corrections switched on."""
        direct = _run(self.flow, self.params, "fractional_direct", faxen=True)
        mild = _run(self.flow, self.params, "mild_volterra", faxen=True)
        assert direct.fields.faxen and mild.fields.faxen
        assert np.max(np.abs(direct.w - mild.w)) <= 1e-2 * math.sqrt(2.0)
        np.testing.assert_allclose(direct.y, mild.y, atol=1e-3)

    @pytest.mark.parametrize("backend", ["fractional_direct", "mild_volterra"])
    def test_particle_velocity_includes_faxen_shift(self, backend):
        """Test v = w + u + (gamma / (6 mu)) lap u along a Faxen run."""
        record = _run(self.flow, self.params, backend, tau_end=1.0, faxen=True)
        sample = self.flow.evaluate(record.y, record.t_phys, order=3, strict=False)
        shift = self.params.faxen_coefficient * sample.lap_u
        assert np.max(np.abs(shift)) > 0.0
        np.testing.assert_allclose(record.v, record.w + sample.u + shift, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(recover_particle_velocity(record), record.v, rtol=0.0, atol=1e-12)

    def test_closure_iteration_cap(self):
        """Test that an iteration cap of one fails at node 1."""
        for backend in ("fractional_direct", "mild_volterra"):
            with pytest.raises(StepFailureError) as info:
                _run(self.flow, self.params, backend, tau_end=0.1, picard_max_iters=1)
            assert info.value.node == 1

    def test_invalid_initial_data(self):
        """Test that mismatched or non-finite initial data is rejected."""
        with pytest.raises(DomainError):
            _run(self.flow, self.params, "mild_volterra", w0=(1.0, 1.0, 1.0))
        with pytest.raises(DomainError):
            _run(self.flow, self.params, "mild_volterra", y0=(math.nan, 0.5))

    def test_domain_exit_is_recorded(self):
        """Test that leaving the domain is recorded."""
        record = _run(self.flow, self.params, "mild_volterra", tau_end=0.5, y0=(1.999, 0.5), w0=(500.0, 0.0))
        assert record.domain_exit
        assert record.exit_tau is not None and record.exit_tau > 0.0


class TestTrajectoryRecord:
    """Test cases for tables and checkpoints."""

    def setup_method(self):
        params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)
        self.record = _run(DoubleGyre(), params, "fractional_direct", tau_end=2.0)

    def test_dataframe(self):
        """Test the trajectory table."""
        table = self.record.to_dataframe()
        assert list(table.columns) == [
            "tau", "t_phys", "y1", "y2", "w1", "w2", "abs_w", "v1", "v2", "envelope", "asymptotic_bound"
        ]
        assert len(table) == 201
        assert table["envelope"].isna().all()
        with pytest.raises(DomainError):
            self.record.to_dataframe(envelope=np.ones(3))

    def test_csv(self, tmp_path):
        """Test the CSV export."""
        path = self.record.to_csv(tmp_path / "out" / "trajectory.csv", asymptotic_bound=1e-3)
        table = pd.read_csv(path)
        assert len(table) == 201
        assert table["asymptotic_bound"].iloc[0] == pytest.approx(1e-3)
        np.testing.assert_allclose(table["abs_w"], self.record.speed())

    def test_slice_and_node_index(self):
        """Test time slices and node lookup."""
        part = self.record.slice(0.5, 1.0)
        assert part["tau"].iloc[0] == pytest.approx(0.5)
        assert part["tau"].iloc[-1] == pytest.approx(1.0)
        assert self.record.node_index(1.0) == 100
        with pytest.raises(DomainError):
            self.record.node_index(1.005)
        with pytest.raises(DomainError):
            self.record.node_index(3.0)

    def test_summary(self):
        """Test the run summary."""
        summary = self.record.summary()
        assert summary["nodes"] == 201
        assert summary["tau_end"] == pytest.approx(2.0)
        assert summary["backend"] == "fractional_direct"
        assert "final |w|" in str(self.record)

    def test_checkpoint_round_trip(self, tmp_path):
        """Test the checkpoint round trip."""
        path = save_checkpoint(self.record, tmp_path / "run.npz")
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.w, self.record.w)
        np.testing.assert_array_equal(loaded.y, self.record.y)
        np.testing.assert_array_equal(loaded.history.sum_f, self.record.history.sum_f)
        assert loaded.params == self.record.params
        assert loaded.config == self.record.config
        assert loaded.fields.field.describe() == self.record.fields.field.describe()

    def test_missing_checkpoint(self, tmp_path):
        """Test that a missing checkpoint raises a configuration error."""
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "absent.npz")
