"""
Tests for the random averaging operators and the time-frequency norms.

Validates:
- Admissible scales and the smooth window
- Parseval for the twisted transform and concentration of free solutions
- Kernel norms, their orderings and the power-iteration estimate
- The decomposition identities and the kernel reconstruction of psi
- Duhamel operators on a constant forcing and their symmetric identity
- Kernels depend only on the data modes below the scale
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.config import settings
from src.models.dynamics_models import TimeGrid
from src.models.operator_models import ScaleSet
from src.models.spectral_models import wavenumber_table
from src.services.averaging_operators import (
    apply_kernel,
    apriori_scan,
    build_H,
    decompose,
    duhamel,
    duhamel_symmetric,
    gauged_reference,
    largest_scale,
    log_log_slope,
    solve_psi,
    twisted_transform,
    window,
    xsb_norm,
    yb_norm,
    yb_norm_power,
    zb_norm,
)
from src.services.gaussian_deviation import measurability_witness
from src.services.gibbs_measures import sample_gff
from src.services.spectral_core import delta_band, linear_flow, project
from src.services.wick_calculus import make_context
from src.utils.exceptions import MissingScaleException, TrajectoryGridException

SMALL_GRID = TimeGrid(half_width=0.25, points=16)


@pytest.fixture(scope="module")
def parts():
    """Decomposition of a free-field draw at N = 2 with kernels."""
    ctx = make_context(1, 2)
    f = sample_gff(2, 5).field
    return f, decompose(2, f, ctx, SMALL_GRID, build_kernels=True)


def free_frames(u, grid):
    return np.stack([linear_flow(u, float(t)).coeffs for t in grid.times])


class TestScales:
    """Test suite for dyadic scale sets."""

    def test_scales_for_eight(self):
        assert ScaleSet.for_cutoff(8, 0.1).scales == [0.5, 1.0, 2.0, 4.0]
        assert largest_scale(8, 0.1) == 4.0

    def test_scales_for_two(self):
        assert ScaleSet.for_cutoff(2, 0.1).scales == [0.5, 1.0]

    def test_rejects_non_dyadic_cutoff(self):
        with pytest.raises(ValidationError):
            ScaleSet(N=6, delta=0.1, scales=[0.5])

    def test_rejects_inadmissible_scale(self):
        with pytest.raises(ValidationError):
            ScaleSet(N=8, delta=0.1, scales=[8.0])


class TestWindow:
    """Test suite for the smooth time cutoff."""

    def test_plateau_and_support(self):
        values = window(np.array([0.0, 0.5, 1.0, 2.0, 3.0]), 2.0)
        np.testing.assert_allclose(values, [1.0, 1.0, 1.0, 0.0, 0.0])

    def test_transition(self):
        value = float(window(1.5, 2.0))
        assert 0.0 < value < 1.0


class TestTwistedTransform:
    """Test suite for the windowed transform and X^{s,b}."""

    def test_parseval(self, field4):
        grid = TimeGrid(half_width=2.0, points=64)
        frames = free_frames(field4, grid)
        chi = window(grid.times, 2.0)
        expected = math.sqrt(grid.spacing * np.sum(chi ** 2 * np.sum(np.abs(frames) ** 2, axis=(1, 2))) / (2 * math.pi))
        assert xsb_norm(frames, 0.0, 0.0, grid.times, 2.0) == pytest.approx(expected, rel=1e-10)

    def test_free_solution_peaks_at_zero(self, field4):
        grid = TimeGrid(half_width=2.0, points=64)
        transform = twisted_transform(free_frames(field4, grid), grid.times, half_width=2.0)
        energy = np.sum(np.abs(transform.values) ** 2, axis=(1, 2))
        assert transform.lambdas[int(np.argmax(energy))] == 0.0

    def test_b_weight_increases_norm(self, field4):
        grid = TimeGrid(half_width=2.0, points=64)
        frames = free_frames(field4, grid)
        assert xsb_norm(frames, 0.0, 0.5, grid.times, 2.0) >= xsb_norm(frames, 0.0, 0.0, grid.times, 2.0)

    def test_coverage_is_checked(self, field4):
        grid = TimeGrid(half_width=1.0, points=16)
        with pytest.raises(TrajectoryGridException, match="cover"):
            twisted_transform(free_frames(field4, grid), grid.times, half_width=2.0)

    def test_needs_times(self, field4):
        with pytest.raises(ValueError, match="times are required"):
            xsb_norm(free_frames(field4, SMALL_GRID))


class TestKernels:
    """Test suite for H^{N,L} and its norms."""

    def test_free_kernel_at_time_zero(self):
        ctx = make_context(1, 2)
        kernel = build_H(2, 0.5, None, ctx, m_star=0.0, grid=SMALL_GRID)
        at_zero = kernel.entries[SMALL_GRID.zero_index]
        for c, column in enumerate(kernel.column_modes):
            for r_index, row in enumerate(kernel.row_modes):
                assert at_zero[r_index, c] == (1.0 if row == column else 0.0)

    def test_psi_at_half_is_free_flow(self, parts):
        f, _ = parts
        psi = solve_psi(2, 0.5, None, make_context(1, 2), f, 0.0, SMALL_GRID)
        band = delta_band(project(f, 2), 2)
        np.testing.assert_allclose(psi.frames, free_frames(band, SMALL_GRID), atol=1e-12)

    def test_kernel_ignores_high_modes(self):
        ctx = make_context(1, 2)
        f = sample_gff(2, 9).field
        m_star = 0.25

        def kernel_entries(field):
            reference = gauged_reference(field, 1.0, 1, SMALL_GRID)
            return build_H(2, 1.0, reference, ctx, m_star, SMALL_GRID).entries

        assert measurability_witness(kernel_entries, f, 1.0, seed=11)

    def test_missing_reference(self):
        ctx = make_context(1, 2)
        with pytest.raises(MissingScaleException):
            build_H(2, 1.0, None, ctx, m_star=0.0, grid=SMALL_GRID)

    def test_norm_ordering(self, parts):
        _, decomposition = parts
        for L, kernel in decomposition.h.items():
            yb = yb_norm(kernel, 0.5)
            zb = zb_norm(kernel, 0.5)
            assert yb <= zb * (1.0 + 1e-9)
            assert zb <= zb_norm(kernel, 0.5, weighted=True) * (1.0 + 1e-9)

    def test_power_iteration_agrees(self, parts):
        _, decomposition = parts
        kernel = decomposition.kernels[1.0]
        exact = yb_norm(kernel, 0.5)
        estimate = yb_norm_power(kernel, 0.5)
        assert estimate <= exact * (1.0 + 1e-6)
        assert estimate >= 0.9 * exact

    def test_kernel_reproduces_psi(self, parts):
        f, decomposition = parts
        band = delta_band(project(f, 2), 2)
        for L, kernel in decomposition.kernels.items():
            np.testing.assert_allclose(apply_kernel(kernel, band), decomposition.psi[L], atol=1e-10)

    def test_apply_kernel_shape_check(self, parts):
        _, decomposition = parts
        with pytest.raises(ValueError, match="band coefficients"):
            apply_kernel(decomposition.kernels[0.5], np.zeros(1))


class TestDecomposition:
    """Test suite for the split of the band solution."""

    def test_scales(self, parts):
        _, decomposition = parts
        assert decomposition.scales.scales == [0.5, 1.0]
        assert set(decomposition.h) == {0.5, 1.0}

    def test_identities(self, parts):
        _, decomposition = parts
        assert decomposition.telescoping_error() <= 1e-12
        assert decomposition.ansatz_error() <= 1e-12

    def test_remainder_vanishes_at_zero(self, parts):
        _, decomposition = parts
        assert np.max(np.abs(decomposition.z[SMALL_GRID.zero_index])) <= 1e-12

    def test_context_mismatch(self):
        with pytest.raises(ValueError, match="differs"):
            decompose(4, sample_gff(4, 0).field, make_context(1, 2), SMALL_GRID)


class TestDuhamel:
    """Test suite for the Duhamel integrals."""

    def constant_forcing(self, grid):
        F = np.zeros((grid.points, 3, 3), dtype=complex)
        F[:, 1, 1] = 1.0
        return F

    def test_forward_integral(self):
        grid = TimeGrid(half_width=2.0, points=128)
        values = duhamel(self.constant_forcing(grid), grid)[:, 1, 1]
        inner = np.abs(grid.times) <= 0.5
        np.testing.assert_allclose(values[inner], grid.times[inner], atol=1e-10)
        assert values[grid.zero_index] == 0.0

    def test_symmetric_integral_is_odd(self):
        grid = TimeGrid(half_width=2.0, points=128)
        values = duhamel_symmetric(self.constant_forcing(grid), grid)[:, 1, 1]
        assert abs(values[grid.zero_index]) <= 1e-3
        inner = np.abs(grid.times) <= 0.5
        np.testing.assert_allclose(values[inner], 2.0 * grid.times[inner], atol=1e-3)

    def test_forward_from_symmetric(self, rng):
        """2 I F = J F - chi e^{it Lap} (J F)(0) for an arbitrary forcing."""
        grid = TimeGrid(half_width=1.0, points=64)
        F = rng.standard_normal((grid.points, 5, 5)) + 1j * rng.standard_normal((grid.points, 5, 5))
        symmetric = duhamel_symmetric(F, grid)
        ksq = wavenumber_table(2)[2]
        chi = window(grid.times, grid.half_width)[:, None, None]
        free = chi * np.exp(-1j * ksq[None] * grid.times[:, None, None]) * symmetric[grid.zero_index][None]
        np.testing.assert_allclose(2.0 * duhamel(F, grid), symmetric - free, atol=1e-8)

    def test_frame_count_checked(self):
        grid = TimeGrid(half_width=2.0, points=16)
        with pytest.raises(TrajectoryGridException, match="frames"):
            duhamel(np.zeros((8, 3, 3), dtype=complex), grid)


class TestScan:
    """Test suite for the a-priori scan."""

    def test_log_log_slope(self):
        assert log_log_slope([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)
        assert math.isnan(log_log_slope([2], [3]))

    def test_small_scan(self):
        report = apriori_scan(2, 1, [0], grid=SMALL_GRID)
        assert [row.L for row in report.rows] == [0.5, 1.0]
        for row in report.rows:
            assert row.yb_h is not None
            assert row.yb_h <= row.zb_h * (1.0 + 1e-9)
            assert row.bound_yb == pytest.approx(row.L ** (-make_context(1, 2).params.delta0))
        assert set(report.fits) == {"z_slope_in_N", "zb_fit_cutoff", "zb_slope_in_L"}
        assert report.fits["zb_fit_cutoff"] == 2.0

    def test_fit_uses_largest_cutoff_with_kernels(self, monkeypatch):
        monkeypatch.setattr(settings, "kernel_max_cutoff", 2)
        report = apriori_scan(4, 1, [0], grid=SMALL_GRID)
        assert all(row.zb_h is None for row in report.rows if row.N == 4)
        assert report.fits["zb_fit_cutoff"] == 2.0
        assert math.isfinite(report.fits["zb_slope_in_L"])
        assert math.isfinite(report.fits["z_slope_in_N"])
