"""Tests for restarts with and without the stored history."""

from dataclasses import replace

import numpy as np
import pytest

from mrbasset.exceptions import DomainError
from mrbasset.flow import DoubleGyre, derived_fields
from mrbasset.params import ParticleParams
from mrbasset.solver import (
    SolverConfig,
    continue_in_windows,
    load_checkpoint,
    restart_discard_history,
    restart_replay_history,
    save_checkpoint,
    simulate,
)

Y0 = (0.6, 0.4)
W0 = (1.0, -1.0)


def _simulate(params, tau_end, backend="fractional_direct"):
    config = SolverConfig(backend=backend, dt=0.01, tau_end=tau_end)
    return simulate(derived_fields(DoubleGyre(), params), params, Y0, W0, config)


def _gap(original, restarted):
    k = original.node_index(restarted.tau[0])
    n = min(len(original) - k, len(restarted))
    return float(np.max(np.abs(original.w[k : k + n] - restarted.w[:n])))


class TestRestarts:
    """Test cases for the two restart strategies."""

    def setup_method(self):
        self.params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)
        self.record = _simulate(self.params, 6.0)
        self.tol = self.record.config.tolerance(self.record.w0_norm)

    def test_discarding_history_changes_the_path(self):
        """Test that dropping the history moves the trajectory."""
        fresh = restart_discard_history(self.record, 3.0)
        assert fresh.origin == 3.0
        assert fresh.tau[0] == pytest.approx(3.0)
        assert fresh.tau_end == pytest.approx(6.0)
        assert len(fresh) == 301
        assert fresh.t0 == pytest.approx(self.record.t0, abs=1e-12)
        np.testing.assert_array_equal(fresh.w[0], self.record.w[300])
        assert _gap(self.record, fresh) > 10.0 * self.tol

    def test_replay_reproduces_the_path(self):
        """Test that replaying the history reproduces the trajectory."""
        replayed = restart_replay_history(self.record, 3.0)
        assert replayed.origin == 0.0
        assert len(replayed) == len(self.record)
        assert _gap(self.record, replayed) <= 2.0 * self.tol

    def test_replay_from_the_start(self):
        """Test a replay from the first node."""
        replayed = restart_replay_history(self.record, 0.0)
        assert _gap(self.record, replayed) <= 2.0 * self.tol

    @pytest.mark.parametrize("tau1", [0.01, 0.02])
    def test_replay_inside_the_start_block(self, tau1):
        """Test a replay that re-solves only part of the coupled start nodes."""
        replayed = restart_replay_history(self.record, tau1)
        assert _gap(self.record, replayed) <= 10.0 * self.tol

    def test_replay_extends_past_the_record(self):
        """Test a replay that runs past the end of the record."""
        short = _simulate(self.params, 2.0)
        extended = restart_replay_history(short, 1.0, replace(short.config, tau_end=4.0))
        assert extended.tau_end == pytest.approx(4.0)
        np.testing.assert_allclose(extended.w, self.record.w[:401], atol=1e-8)

    def test_memoryless_restarts_agree(self):
        """Test that both restarts agree without memory."""
        params = ParticleParams.synthetic_mode(0.0, eps=0.01, R=1.0)
        record = _simulate(params, 4.0, backend="mild_volterra")
        fresh = restart_discard_history(record, 2.0)
        assert _gap(record, fresh) <= 1e-8

    def test_invalid_restart_times(self):
        """Test that restart times off the record or the grid are rejected."""
        with pytest.raises(DomainError):
            restart_discard_history(self.record, 0.0)
        with pytest.raises(DomainError):
            restart_discard_history(self.record, 6.0)
        with pytest.raises(DomainError):
            restart_discard_history(self.record, 3.005)
        with pytest.raises(DomainError):
            restart_replay_history(self.record, 3.0, replace(self.record.config, tau_end=2.0))

    def test_replay_needs_the_same_step(self):
        """Test that a replay keeps the step size."""
        with pytest.raises(DomainError):
            restart_replay_history(self.record, 3.0, replace(self.record.config, dt=0.02))

    def test_restart_cannot_switch_faxen(self):
        """Test that a restart keeps the Faxen setting."""
        with pytest.raises(DomainError):
            restart_discard_history(self.record, 3.0, replace(self.record.config, faxen=True))


class TestContinuation:
    """Test cases for chained replay windows and checkpoint continuation."""

    def setup_method(self):
        self.params = ParticleParams.from_dimensionless(1.0, 0.01, 1.0)
        self.full = _simulate(self.params, 6.0)

    def test_windows_match_a_single_run(self):
        """Test that chained windows match one long run."""
        start = _simulate(self.params, 2.0)
        chained = continue_in_windows(start, 1.0, 6.0)
        assert len(chained) == len(self.full)
        np.testing.assert_allclose(chained.w, self.full.w, atol=1e-8)
        np.testing.assert_allclose(chained.y, self.full.y, atol=1e-8)

    def test_window_must_be_positive(self):
        """Test that the window length must be positive."""
        with pytest.raises(DomainError):
            continue_in_windows(self.full, 0.0, 8.0)

    def test_continue_from_checkpoint(self, tmp_path):
        """Test continuation from a saved checkpoint."""
        start = _simulate(self.params, 2.0)
        loaded = load_checkpoint(save_checkpoint(start, tmp_path / "start.npz"))
        continued = continue_in_windows(loaded, 2.0, 6.0)
        np.testing.assert_allclose(continued.w, self.full.w, atol=1e-8)

    def test_discarded_history_after_restart_keeps_origin(self):
        """Test that a replay after a fresh restart keeps its origin."""
        fresh = restart_discard_history(self.full, 2.0)
        again = restart_replay_history(fresh, 4.0)
        assert again.origin == 2.0
        assert _gap(fresh, again) <= 2.0 * fresh.config.tolerance(fresh.w0_norm)
