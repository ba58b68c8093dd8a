"""
Tests for the Fourier representation on the 2-torus.

Validates:
- Truncation shells and dyadic bands
- Exact pseudospectral products
- Mass, Sobolev norms and the linear propagator
- Grid policies and the aliasing guard
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.spectral_models import SpectralField, Wavenumber, half_width
from src.services.spectral_core import (
    band_modes,
    delta_band,
    dyadic_scales,
    embed,
    exactness_threshold,
    grid_size,
    inner,
    linear_flow,
    mass,
    product,
    project,
    shell_modes,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from src.utils.exceptions import AliasingException


class TestShells:
    """Test suite for the truncation sets <k> <= N."""

    @pytest.mark.parametrize("N, K", [(1, 0), (2, 2), (4, 4), (8, 8)])
    def test_half_width(self, N, K):
        assert half_width(N) == K

    def test_shell_of_two(self):
        """<k>^2 = |k|^2 + 1 <= 4 keeps |k|^2 <= 3."""
        modes = shell_modes(2)
        assert len(modes) == 9
        assert (1, 1) in modes
        assert (2, 0) not in modes

    def test_band_excludes_lower_shell(self):
        modes = band_modes(2)
        assert len(modes) == 8
        assert (0, 0) not in modes

    def test_wavenumber_within(self):
        assert Wavenumber(kx=3, ky=0).within(4)
        assert not Wavenumber(kx=4, ky=0).within(4)

    def test_dyadic_scales(self):
        assert dyadic_scales(8) == [1, 2, 4, 8]


class TestSpectralField:
    """Test suite for SpectralField validation and arithmetic."""

    def test_rejects_even_side(self):
        with pytest.raises(ValidationError, match="odd side"):
            SpectralField(cutoff=2, coeffs=np.zeros((4, 4)))

    def test_rejects_modes_outside_shell(self):
        coeffs = np.zeros((5, 5), dtype=complex)
        coeffs[4, 2] = 1.0  # k = (2, 0), <k>^2 = 5 > 4
        with pytest.raises(ValidationError, match="must be zero"):
            SpectralField(cutoff=2, coeffs=coeffs)

    def test_from_coeffs_zeroes_outside_shell(self):
        u = SpectralField.from_coeffs(2, np.ones((5, 5)))
        assert mass(u) == pytest.approx(9.0)

    def test_immutable(self, field4):
        with pytest.raises(ValueError):
            field4.coeffs[0, 0] = 1.0

    def test_addition_pads_to_larger_cutoff(self):
        u = SpectralField.single_mode(2, (1, 0)) + SpectralField.single_mode(4, (3, 0))
        assert u.cutoff == 4
        assert u.coefficient((1, 0)) == 1.0
        assert u.coefficient((3, 0)) == 1.0


class TestTruncation:
    """Test suite for Pi_N and Delta_N."""

    def test_project_drops_high_modes(self):
        u = SpectralField.single_mode(4, (3, 0)) + SpectralField.single_mode(4, (1, 0))
        v = project(u, 2)
        assert v.cutoff == 2
        assert v.coefficient((3, 0)) == 0.0
        assert v.coefficient((1, 0)) == 1.0

    def test_project_is_idempotent(self, field4):
        once = project(field4, 2)
        np.testing.assert_array_equal(project(once, 2).coeffs, once.coeffs)

    def test_embed_pads_with_zeros(self, field4):
        big = embed(field4, 8)
        assert big.cutoff == 8
        assert mass(big) == pytest.approx(mass(field4))
        np.testing.assert_array_equal(project(big, 4).coeffs, field4.coeffs)
        with pytest.raises(ValueError, match="project"):
            embed(field4, 2)

    def test_bands_sum_to_field(self, field4):
        total = delta_band(field4, 1) + delta_band(field4, 2) + delta_band(field4, 4)
        np.testing.assert_allclose(total.coeffs, field4.coeffs)

    def test_band_requires_dyadic_index(self, field4):
        with pytest.raises(ValueError, match="dyadic"):
            delta_band(field4, 3)


class TestProducts:
    """Test suite for exact pseudospectral products."""

    def test_two_modes(self):
        u = SpectralField.single_mode(4, (1, 0))
        v = SpectralField.single_mode(4, (0, 1))
        assert product([u, v], [False, False]).coefficient((1, 1)) == pytest.approx(1.0)
        assert product([u, v], [False, True]).coefficient((1, -1)) == pytest.approx(1.0)

    def test_cubic_matches_convolution(self, field4):
        """|u|^2 u from the grid equals the direct convolution restricted to <k> <= N."""
        N = 4
        K = half_width(N)
        u = field4.coeffs
        direct = np.zeros_like(u)
        modes = shell_modes(N)
        for k1 in modes:
            for k2 in modes:
                for k3 in modes:
                    k = (k1[0] - k2[0] + k3[0], k1[1] - k2[1] + k3[1])
                    if abs(k[0]) <= K and abs(k[1]) <= K:
                        direct[k[0] + K, k[1] + K] += (
                            u[k1[0] + K, k1[1] + K] * np.conj(u[k2[0] + K, k2[1] + K]) * u[k3[0] + K, k3[1] + K]
                        )
        expected = SpectralField.from_coeffs(N, direct)
        got = product([field4, field4, field4], [False, True, False])
        np.testing.assert_allclose(got.coeffs, expected.coeffs, atol=1e-12)

    def test_grid_roundtrip(self, field4):
        g = to_physical(field4, grid_size(4, 1))
        np.testing.assert_allclose(to_spectral(g, 4).coeffs, field4.coeffs, atol=1e-13)

    def test_mass_is_mean_square(self, field4):
        g = to_physical(field4, grid_size(4, 2), degree=2)
        assert np.mean(np.abs(g.values) ** 2) == pytest.approx(mass(field4), rel=1e-12)

    def test_strict_aliasing_guard(self, field4):
        with pytest.raises(AliasingException, match="below"):
            to_physical(field4, 12, degree=1, strict=True)


class TestGridPolicies:
    """Test suite for grid sizes."""

    def test_exact_policy_is_power_of_two(self):
        assert grid_size(4, 3, "exact") == 64

    def test_compact_policy_meets_threshold(self):
        M = grid_size(4, 3, "compact")
        assert M >= exactness_threshold(4, 3)
        assert M < 64

    def test_unknown_policy(self):
        with pytest.raises(ValueError, match="Unknown grid policy"):
            grid_size(4, 3, "coarse")


class TestNormsAndFlow:
    """Test suite for Sobolev norms and e^{it Laplacian}."""

    def test_l2_norm_is_root_mass(self, field4):
        assert sobolev_norm(field4, 0.0) == pytest.approx(np.sqrt(mass(field4)))

    def test_linear_flow_is_unitary(self, field4):
        v = linear_flow(field4, 0.7)
        assert mass(v) == pytest.approx(mass(field4))
        assert sobolev_norm(v, 1.0) == pytest.approx(sobolev_norm(field4, 1.0))

    def test_linear_flow_phase(self):
        u = SpectralField.single_mode(4, (1, 1))
        assert linear_flow(u, 0.5).coefficient((1, 1)) == pytest.approx(np.exp(-1j))

    def test_inner_is_mass_on_diagonal(self, field4):
        assert inner(field4, field4) == pytest.approx(mass(field4))
