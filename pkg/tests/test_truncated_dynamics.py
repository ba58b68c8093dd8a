"""
Tests for the truncated and gauged flows.

Validates:
- Exact linear propagation in the interaction picture, forward and backward
- Conservation of mass and H_N and the fourth-order drift reduction
- Gauge equivalence of the two flows
- Two-sided grids, ensembles and the instability detector
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.dynamics_models import EvolutionConfig, TimeGrid, Trajectory
from src.services.spectral_core import inner, linear_flow
from src.services.truncated_dynamics import (
    compose_local_steps,
    conservation_report,
    default_config,
    drift_refinement,
    evolve,
    evolve_ensemble,
    evolve_on_grid,
    gauge_forward,
    gauge_inverse,
    phase_rate_batch,
    rhs_gauged,
    rhs_truncated,
)
from src.services.wick_calculus import make_context, phase_rate
from src.utils.exceptions import NumericalAbortException

from .conftest import random_field


class TestLinearFlow:
    """Test suite for the nonlinearity switched off."""

    def test_forward_is_exact(self, field4, ctx_r1_n4):
        cfg = default_config(4, 0.5, nonlinear=False)
        final = evolve(field4, ctx_r1_n4, cfg).final
        np.testing.assert_allclose(final.coeffs, linear_flow(field4, 0.5).coeffs, atol=1e-12)

    def test_backward_is_exact(self, field4, ctx_r1_n4):
        cfg = default_config(4, -0.3, nonlinear=False)
        traj = evolve(field4, ctx_r1_n4, cfg)
        assert np.all(np.diff(traj.times) < 0)
        np.testing.assert_allclose(traj.final.coeffs, linear_flow(field4, -0.3).coeffs, atol=1e-12)


class TestVectorFields:
    """Test suite for the right-hand sides."""

    def test_truncated_field_preserves_mass(self, field4, ctx_r1_n4):
        assert np.real(inner(rhs_truncated(field4, ctx_r1_n4), field4)) == pytest.approx(0.0, abs=1e-10)

    def test_gauged_field_preserves_mass(self, field4, ctx_r1_n4):
        rhs = rhs_gauged(field4, ctx_r1_n4, m_star=0.5)
        assert np.real(inner(rhs, field4)) == pytest.approx(0.0, abs=1e-10)

    def test_rejects_larger_cutoff(self, rng):
        with pytest.raises(ValueError, match="exceeds"):
            rhs_truncated(random_field(rng, 8), make_context(1, 4))


class TestConservation:
    """Test suite for mass and energy conservation."""

    def test_drifts_are_small(self, rng, ctx_r1_n4):
        u0 = random_field(rng, 4, scale=0.1)
        report = conservation_report(evolve(u0, ctx_r1_n4, default_config(4, 0.5)))
        assert report.max_mass_drift <= 1e-8
        assert report.max_hamiltonian_drift <= 1e-6
        assert report.rows[0].t == 0.0

    def test_fourth_order_refinement(self, rng):
        ctx = make_context(1, 2)
        u0 = random_field(rng, 2, scale=0.5)
        cfg = EvolutionConfig(dt=0.05, t_span=(0.0, 0.5))
        result = drift_refinement(u0, ctx, cfg)
        assert result["drift"] > result["drift_half"]
        assert result["ratio"] >= 6.0

    def test_strang_scheme_runs(self, field4, ctx_r1_n4):
        cfg = default_config(4, 0.1, scheme="strang")
        report = conservation_report(evolve(field4, ctx_r1_n4, cfg))
        assert report.max_mass_drift <= 1e-6


class TestGauge:
    """Test suite for the gauge transform."""

    def test_gauged_flow_matches_gauged_trajectory(self, rng, ctx_r1_n4):
        u0 = random_field(rng, 4, scale=0.2)
        cfg = default_config(4, 0.25)
        direct = gauge_forward(evolve(u0, ctx_r1_n4, cfg), ctx_r1_n4)
        gauged = evolve(u0, ctx_r1_n4, cfg, gauged=True)
        np.testing.assert_allclose(np.abs(gauged.frames), np.abs(direct.frames), atol=1e-6)

    def test_inverse_undoes_forward(self, field4, ctx_r1_n4):
        traj = evolve(field4, ctx_r1_n4, default_config(4, 0.1))
        back = gauge_inverse(gauge_forward(traj, ctx_r1_n4), ctx_r1_n4)
        np.testing.assert_allclose(back.frames, traj.frames, atol=1e-12)
        assert not back.gauged

    def test_gauge_flags(self, field4, ctx_r1_n4):
        traj = evolve(field4, ctx_r1_n4, default_config(4, 0.05))
        with pytest.raises(ValueError, match="not gauged"):
            gauge_inverse(traj, ctx_r1_n4)

    def test_phase_rate_batch(self, field4, ctx_r1_n4):
        traj = evolve(field4, ctx_r1_n4, default_config(4, 0.05))
        rates = phase_rate_batch(np.asarray(traj.frames), ctx_r1_n4)
        assert rates[0] == pytest.approx(phase_rate(field4, ctx_r1_n4))


class TestGridsAndEnsembles:
    """Test suite for two-sided grids, ensembles and composition."""

    def test_symmetric_grid(self, field4, ctx_r1_n4):
        grid = TimeGrid(half_width=0.25, points=8)
        traj = evolve_on_grid(field4, ctx_r1_n4, grid)
        np.testing.assert_allclose(traj.times, grid.times)
        np.testing.assert_array_equal(traj.frames[grid.zero_index], field4.coeffs)

    def test_ensemble_matches_single_runs(self, rng, ctx_r1_n4):
        samples = [random_field(rng, 4, scale=0.2) for _ in range(3)]
        cfg = default_config(4, 0.1)
        finals = evolve_ensemble(samples, ctx_r1_n4, cfg)
        for u0, final in zip(samples, finals):
            np.testing.assert_allclose(final.coeffs, evolve(u0, ctx_r1_n4, cfg).final.coeffs, atol=1e-12)

    def test_composed_steps(self, field4, ctx_r1_n4):
        traj = compose_local_steps(field4, ctx_r1_n4, tau=0.05, pieces=2)
        assert traj.times[-1] == pytest.approx(0.1)
        single = evolve(field4, ctx_r1_n4, default_config(4, 0.1))
        np.testing.assert_allclose(traj.final.coeffs, single.final.coeffs, atol=1e-8)


class TestGuards:
    """Test suite for step-size and blowup guards."""

    def test_step_too_large(self, field4):
        cfg = EvolutionConfig(dt=0.1, t_span=(0.0, 1.0))
        with pytest.raises(ValueError, match="too large"):
            evolve(field4, make_context(1, 8), cfg)

    def test_blowup_detected(self, rng, ctx_r1_n4):
        u0 = random_field(rng, 4, scale=50.0)
        cfg = EvolutionConfig(dt=1.0 / 16.0, t_span=(0.0, 1.0), blowup_factor=1.5)
        with pytest.raises(NumericalAbortException, match="norm grew"):
            evolve(u0, ctx_r1_n4, cfg)

    def test_trajectory_times_monotone(self):
        frames = np.zeros((3, 9, 9), dtype=complex)
        with pytest.raises(ValidationError, match="monotone"):
            Trajectory(cutoff=4, r=1, times=np.array([0.0, 0.2, 0.1]), frames=frames, mass=np.zeros(3),
                       hamiltonian=np.zeros(3), phase_rate=np.zeros(3), gauge_phase=np.zeros(3))
