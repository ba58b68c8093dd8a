"""
Tests for the free-field and Gibbs samplers.

Validates:
- Nesting of draws across cutoffs and independence from the worker count
- Free-field moments: E m_N = sigma_N and E V_N = 0
- Energies, mass statistics and weighted estimators
- pCN chains
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.config import settings
from src.models.measure_models import GibbsEnsemble
from src.models.spectral_models import SpectralField
from src.services.gibbs_measures import (
    effective_sample_size,
    gff_stack,
    hamiltonian,
    mass_stats,
    partition_function_ladder,
    potential_batch,
    potential_energy,
    radon_nikodym_moments,
    resample_indices,
    sample_gff,
    sample_gibbs_importance,
    sample_gibbs_pcn,
    weighted_mean_and_se,
)
from src.services.spectral_core import gradient_energy, mass, project
from src.services.wick_calculus import make_context, sigma


class TestFreeField:
    """Test suite for Gaussian free field draws."""

    def test_draws_nest_across_cutoffs(self):
        coarse = sample_gff(4, seed=3).field
        fine = sample_gff(8, seed=3).field
        np.testing.assert_array_equal(project(fine, 4).coeffs, coarse.coeffs)

    def test_seed_and_index_matter(self):
        a = sample_gff(4, seed=3, index=0).field
        b = sample_gff(4, seed=3, index=1).field
        c = sample_gff(4, seed=4, index=0).field
        assert not np.array_equal(a.coeffs, b.coeffs)
        assert not np.array_equal(a.coeffs, c.coeffs)

    def test_mean_mass_is_sigma(self):
        count = 400
        masses = np.sum(np.abs(gff_stack(4, 11, range(count))) ** 2, axis=(-2, -1))
        m, se = weighted_mean_and_se(masses)
        assert abs(m - sigma(4)) <= 4.0 * se

    def test_mean_potential_vanishes(self):
        ctx = make_context(1, 4)
        values = potential_batch(gff_stack(4, 5, range(400)), ctx)
        m, se = weighted_mean_and_se(values)
        assert abs(m) <= 4.0 * se

    def test_rejects_zero_cutoff(self):
        with pytest.raises(ValueError, match="cutoff"):
            sample_gff(0, seed=0)


class TestEnergies:
    """Test suite for V_N, H_N and the mass statistics."""

    def test_potential_of_zero_field(self, ctx_r1_n4):
        """W^4(0) = 2 sigma^2, so V_N[0] = sigma_N^2 for r = 1."""
        assert potential_energy(SpectralField.zeros(4), ctx_r1_n4) == pytest.approx(ctx_r1_n4.sigma_N ** 2)

    def test_hamiltonian_splits(self, field4, ctx_r1_n4):
        expected = gradient_energy(field4) + potential_energy(field4, ctx_r1_n4)
        assert hamiltonian(field4, ctx_r1_n4) == pytest.approx(expected)

    def test_mass_stats(self, field4, ctx_r1_n4):
        stats = mass_stats(field4, ctx_r1_n4)
        assert stats.m_N == pytest.approx(mass(field4))
        assert stats.m_N_star == pytest.approx(mass(field4) - sigma(4))
        expected_nu = stats.m_N_star - (mass(project(field4, 2)) - sigma(2))
        assert stats.nu_N == pytest.approx(expected_nu)


class TestWeightedStatistics:
    """Test suite for importance-weight helpers."""

    def test_uniform_weights(self, rng):
        values = rng.standard_normal(200)
        m, se = weighted_mean_and_se(values, np.zeros(200))
        assert m == pytest.approx(np.mean(values))
        assert se == pytest.approx(np.std(values) / math.sqrt(200))

    def test_effective_sample_size(self):
        assert effective_sample_size(np.zeros(50)) == pytest.approx(50.0)
        assert effective_sample_size(np.array([0.0] + [-60.0] * 49)) == pytest.approx(1.0)

    def test_resampling_follows_weights(self):
        index = resample_indices(np.array([0.0, -50.0, -50.0]), 10, seed=0)
        assert np.all(index == 0)


class TestImportanceSampler:
    """Test suite for the importance-weighted Gibbs ensemble."""

    def test_worker_independence(self, monkeypatch):
        monkeypatch.setattr(settings, "batch_size", 7)
        serial = sample_gibbs_importance(4, 1, 30, seed=2, workers=1)
        threaded = sample_gibbs_importance(4, 1, 30, seed=2, workers=3)
        np.testing.assert_array_equal(serial.log_weights, threaded.log_weights)
        np.testing.assert_array_equal(serial.coefficient_stack, threaded.coefficient_stack)

    def test_ensemble_fields(self):
        ensemble = sample_gibbs_importance(4, 1, 20, seed=1)
        assert ensemble.count == 20
        assert ensemble.sampler_tag == "importance"
        assert 1.0 <= ensemble.ess <= 20.0
        assert ensemble.weights.sum() == pytest.approx(1.0)
        assert ensemble.log_partition is not None

    def test_rejects_empty_ensemble(self):
        with pytest.raises(ValueError, match="count"):
            sample_gibbs_importance(4, 1, 0, seed=1)

    def test_ess_bounded_by_count(self):
        with pytest.raises(ValidationError, match="ess"):
            GibbsEnsemble(samples=[SpectralField.zeros(2)], log_weights=np.zeros(1), seed=0, N=2, r=1,
                          ess=2.0, sampler_tag="importance")

    def test_zero_exponent_moment(self):
        moments = radon_nikodym_moments(4, 1, [0.0, 1.0], count=20, seed=0)
        assert moments[0.0] == pytest.approx(0.0, abs=1e-12)

    def test_partition_function_ladder(self):
        ladder = partition_function_ladder([2, 4], 1, 16, seed=3)
        assert list(ladder) == [2, 4]
        assert ladder[4] == sample_gibbs_importance(4, 1, 16, seed=3).log_partition
        assert all(math.isfinite(value) for value in ladder.values())


class TestPcnSampler:
    """Test suite for preconditioned Crank-Nicolson chains."""

    def test_unweighted_chain_always_accepts(self):
        ensemble = sample_gibbs_pcn(4, 1, steps=20, step_size=0.5, seed=0, weighted=False)
        assert ensemble.acceptance_rate == pytest.approx(1.0)
        assert ensemble.count == 20

    def test_chains_concatenate(self):
        ensemble = sample_gibbs_pcn(4, 1, steps=10, step_size=0.5, seed=0, chains=2)
        assert ensemble.count == 20
        assert ensemble.chains == 2
        assert 0.0 <= ensemble.acceptance_rate <= 1.0

    def test_step_size_range(self):
        with pytest.raises(ValueError, match="step size"):
            sample_gibbs_pcn(4, 1, steps=10, step_size=1.5, seed=0)
